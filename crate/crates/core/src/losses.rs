//! Class-level losses and their adaptive aggregation.
//!
//! A batch is reduced to one loss value per class,
//! `F_c = -(1/m) * sum_{i: y_i = c} phi(p_ic)`, where `phi` is `log` for
//! cross-entropy and `(1 - p)^gamma * log` for focal loss. The scalar loss is
//! then a weighted combination `sum_c w_c * F_c` whose weights depend on the
//! aggregation mode:
//!
//! * `Mean`: uniform `1/C` (cross-entropy on the same scale as OWAdapt)
//! * `Sum`: uniform with scale `C`, i.e. the usual batch-mean cross-entropy
//! * `Owa`: quantifier weights assigned to classes by descending `F_c`
//! * `Owawa`: a `beta` blend of the OWA assignment with fixed class costs
//!
//! The assignment is recomputed from the current `F` on every call and is
//! treated as a constant when differentiating.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    check_beta, descending_order, owa_weights, owawa_sorted_weights, QuantifierSpec,
    WeightVector,
};
use crate::error::{Error, Result};
use crate::network::softmax_rows;

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLoss {
    CrossEntropy,
    Focal { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
    Owa {
        quantifier: QuantifierSpec,
    },
    Owawa {
        quantifier: QuantifierSpec,
        costs: WeightVector,
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub base: BaseLoss,
    pub aggregation: Aggregation,
    /// Fixed per-class multipliers applied to `F_c` before aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<WeightVector>,
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        Self {
            base: BaseLoss::CrossEntropy,
            aggregation: Aggregation::Mean,
            class_weights: None,
        }
    }

    pub fn focal(gamma: f64) -> Self {
        Self {
            base: BaseLoss::Focal { gamma },
            aggregation: Aggregation::Mean,
            class_weights: None,
        }
    }

    pub fn owa(quantifier: QuantifierSpec) -> Self {
        Self {
            base: BaseLoss::CrossEntropy,
            aggregation: Aggregation::Owa { quantifier },
            class_weights: None,
        }
    }

    pub fn with_base(mut self, base: BaseLoss) -> Self {
        self.base = base;
        self
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if let BaseLoss::Focal { gamma } = self.base {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(Error::Domain(format!("focal gamma must be >= 0, got {gamma}")));
            }
        }
        match &self.aggregation {
            Aggregation::Mean | Aggregation::Sum => {}
            Aggregation::Owa { quantifier } => quantifier.validate()?,
            Aggregation::Owawa {
                quantifier,
                costs,
                beta,
            } => {
                quantifier.validate()?;
                check_beta(*beta)?;
                if costs.len() != classes {
                    return Err(Error::Dimension(format!(
                        "OWAWA costs have length {}, expected {classes}",
                        costs.len()
                    )));
                }
            }
        }
        if let Some(cw) = &self.class_weights {
            if cw.len() != classes {
                return Err(Error::Dimension(format!(
                    "class weights have length {}, expected {classes}",
                    cw.len()
                )));
            }
        }
        Ok(())
    }
}

/// Per-class loss components of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLossVector {
    pub values: Vec<f64>,
    /// Number of samples of each class in the batch.
    pub counts: Vec<usize>,
}

impl ClassLossVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of aggregating a [`ClassLossVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedLoss {
    pub loss: f64,
    /// Weight applied to each class, in original class order.
    pub weights: WeightVector,
    /// Overall multiplier: `loss = scale * sum_c weights[c] * F_c`.
    pub scale: f64,
    /// Class indices from largest to smallest `F_c`.
    pub order: Vec<usize>,
}

fn check_batch(probs: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    let (m, c) = probs.dim();
    if m == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    if labels.len() != m {
        return Err(Error::Dimension(format!(
            "{m} probability rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Dimension(format!("label {bad} out of range for {c} classes")));
    }
    Ok(())
}

/// Loss contribution `-phi(p)` of one sample whose true-class probability is `p`.
fn sample_term(base: BaseLoss, p: f64) -> f64 {
    let log_p = p.clamp(LOG_CLAMP, 1.0).ln();
    match base {
        BaseLoss::CrossEntropy => -log_p,
        BaseLoss::Focal { gamma } => -((1.0 - p).max(0.0).powf(gamma) * log_p),
    }
}

/// Derivative of [`sample_term`] with respect to `p`.
fn sample_term_dp(base: BaseLoss, p: f64) -> f64 {
    let dlog = if p < LOG_CLAMP { 0.0 } else { 1.0 / p };
    match base {
        BaseLoss::CrossEntropy => -dlog,
        BaseLoss::Focal { gamma } => {
            let q = (1.0 - p).max(0.0);
            let log_p = p.clamp(LOG_CLAMP, 1.0).ln();
            let modulating_dp = if gamma == 0.0 || q == 0.0 {
                0.0
            } else {
                gamma * q.powf(gamma - 1.0) * log_p
            };
            modulating_dp - q.powf(gamma) * dlog
        }
    }
}

/// Per-class losses `F_c`, normalized by the batch size.
///
/// Classes without samples in the batch get `F_c = 0`.
pub fn class_losses(
    base: BaseLoss,
    probs: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<ClassLossVector> {
    check_batch(&probs, labels)?;
    let (m, c) = probs.dim();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0; c];
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        sums[y] += sample_term(base, row[y]);
        counts[y] += 1;
    }
    let m = m as f64;
    Ok(ClassLossVector {
        values: sums.into_iter().map(|s| s / m).collect(),
        counts,
    })
}

/// A loss configuration prepared for a fixed number of classes.
///
/// The positional weight vector is computed once here; only its assignment
/// to classes changes between batches.
#[derive(Debug, Clone)]
pub struct ClassLoss {
    config: LossConfig,
    classes: usize,
    positional: WeightVector,
}

impl ClassLoss {
    pub fn new(config: LossConfig, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Dimension("need at least one class".into()));
        }
        config.validate(classes)?;
        let positional = match &config.aggregation {
            Aggregation::Mean | Aggregation::Sum => WeightVector::uniform(classes)?,
            Aggregation::Owa { quantifier } | Aggregation::Owawa { quantifier, .. } => {
                owa_weights(quantifier, classes)?
            }
        };
        Ok(Self {
            config,
            classes,
            positional,
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Quantifier weights by sorted position (uniform for `Mean`/`Sum`).
    pub fn positional_weights(&self) -> &WeightVector {
        &self.positional
    }

    /// Base class losses with the optional fixed class weights applied.
    pub fn class_losses(
        &self,
        probs: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<ClassLossVector> {
        if probs.ncols() != self.classes {
            return Err(Error::Dimension(format!(
                "expected {} probability columns, got {}",
                self.classes,
                probs.ncols()
            )));
        }
        let mut f = class_losses(self.config.base, probs, labels)?;
        if let Some(cw) = &self.config.class_weights {
            for (v, w) in f.values.iter_mut().zip(cw.as_slice()) {
                *v *= w;
            }
        }
        Ok(f)
    }

    pub fn aggregate(&self, f: &ClassLossVector) -> Result<AggregatedLoss> {
        self.check_len(f.len())?;
        let order = descending_order(&f.values);
        self.aggregate_with_order(f, order)
    }

    /// Aggregates with a caller-supplied class ranking instead of sorting `f`.
    pub fn aggregate_with_order(
        &self,
        f: &ClassLossVector,
        order: Vec<usize>,
    ) -> Result<AggregatedLoss> {
        self.check_len(f.len())?;
        self.check_len(order.len())?;
        let c = self.classes;
        let mut per_class = vec![0.0; c];
        let scale = match &self.config.aggregation {
            Aggregation::Mean => {
                per_class.copy_from_slice(self.positional.as_slice());
                1.0
            }
            Aggregation::Sum => {
                per_class.copy_from_slice(self.positional.as_slice());
                c as f64
            }
            Aggregation::Owa { .. } => {
                for (&class, &w) in order.iter().zip(self.positional.as_slice()) {
                    per_class[class] = w;
                }
                1.0
            }
            Aggregation::Owawa { costs, beta, .. } => {
                let blended = owawa_sorted_weights(&self.positional, costs, &order, *beta)?;
                for (&class, w) in order.iter().zip(blended) {
                    per_class[class] = w;
                }
                1.0
            }
        };
        let loss = scale
            * per_class
                .iter()
                .zip(&f.values)
                .map(|(w, v)| w * v)
                .sum::<f64>();
        Ok(AggregatedLoss {
            loss,
            weights: WeightVector::new(per_class)?,
            scale,
            order,
        })
    }

    /// Gradient of the aggregated loss with respect to the pre-softmax scores,
    /// holding the class weights in `agg` fixed.
    pub fn gradient(
        &self,
        agg: &AggregatedLoss,
        probs: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<Array2<f64>> {
        check_batch(&probs, labels)?;
        let (m, c) = probs.dim();
        self.check_len(c)?;
        self.check_len(agg.weights.len())?;
        let mut coeff: Vec<f64> = agg
            .weights
            .as_slice()
            .iter()
            .map(|w| agg.scale * w / m as f64)
            .collect();
        if let Some(cw) = &self.config.class_weights {
            for (k, w) in coeff.iter_mut().zip(cw.as_slice()) {
                *k *= w;
            }
        }
        let mut grad = Array2::zeros((m, c));
        for ((p, mut g), &y) in probs.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
            let k = coeff[y];
            if k == 0.0 {
                continue;
            }
            let pt = p[y];
            match self.config.base {
                BaseLoss::CrossEntropy if pt >= LOG_CLAMP => {
                    for j in 0..c {
                        g[j] = k * p[j];
                    }
                    g[y] -= k;
                }
                base => {
                    // d phi / dz_j = phi'(p_t) * p_t * (delta_tj - p_j)
                    let outer = k * sample_term_dp(base, pt) * pt;
                    for j in 0..c {
                        g[j] = -outer * p[j];
                    }
                    g[y] += outer;
                }
            }
        }
        Ok(grad)
    }

    /// Forward and backward through softmax in one call.
    pub fn evaluate(&self, scores: ArrayView2<'_, f64>, labels: &[usize]) -> Result<LossEvaluation> {
        let probs = softmax_rows(scores);
        let f = self.class_losses(probs.view(), labels)?;
        let agg = self.aggregate(&f)?;
        let grad = self.gradient(&agg, probs.view(), labels)?;
        Ok(LossEvaluation {
            class_losses: f,
            aggregated: agg,
            probs,
            grad,
        })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.classes {
            return Err(Error::Dimension(format!(
                "expected {} classes, got {len}",
                self.classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub class_losses: ClassLossVector,
    pub aggregated: AggregatedLoss,
    pub probs: Array2<f64>,
    /// Gradient with respect to the scores.
    pub grad: Array2<f64>,
}

impl LossEvaluation {
    pub fn loss(&self) -> f64 {
        self.aggregated.loss
    }
}

pub fn aggregate_loss(config: &LossConfig, f: &ClassLossVector) -> Result<AggregatedLoss> {
    ClassLoss::new(config.clone(), f.len())?.aggregate(f)
}

/// Gradient of the configured loss with respect to the scores behind `probs`.
pub fn loss_gradient(
    config: &LossConfig,
    probs: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<Array2<f64>> {
    let loss = ClassLoss::new(config.clone(), probs.ncols())?;
    let f = loss.class_losses(probs, labels)?;
    let agg = loss.aggregate(&f)?;
    loss.gradient(&agg, probs, labels)
}
