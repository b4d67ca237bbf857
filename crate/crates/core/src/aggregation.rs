//! Ordered weighted averaging and its relatives.
//!
//! All operators follow the descending convention: after sorting, position 1
//! holds the *largest* argument, so `w[0]` multiplies the maximum. A weight
//! vector `(1, 0, .., 0)` therefore yields the max and `(0, .., 0, 1)` the min.
//!
//! Sorting is stable. Equal arguments keep their original index order, which
//! matters whenever weights are mapped back onto positions (OWAWA blending,
//! per-class loss weights).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(w) == 1` for a valid weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Smallest magnitude allowed for the quadratic quantifier's denominator.
pub const QUADRATIC_DENOM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantifierFamily {
    /// `Q(r) = r^alpha`
    Basic,
    /// `Q(r) = 1 / (1 - alpha * sqrt(r))`, rescaled
    Quadratic,
    /// antonym of `exp(-alpha * r)`: `Q(r) = exp(-alpha * (1 - r))`, rescaled
    Exponential,
}

impl QuantifierFamily {
    pub const ALL: [QuantifierFamily; 3] = [
        QuantifierFamily::Basic,
        QuantifierFamily::Quadratic,
        QuantifierFamily::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuantifierFamily::Basic => "basic",
            QuantifierFamily::Quadratic => "quadratic",
            QuantifierFamily::Exponential => "exponential",
        }
    }
}

impl std::fmt::Display for QuantifierFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for QuantifierFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" | "b" => Ok(QuantifierFamily::Basic),
            "quadratic" | "q" => Ok(QuantifierFamily::Quadratic),
            "exponential" | "e" => Ok(QuantifierFamily::Exponential),
            other => Err(Error::Domain(format!("unknown quantifier family `{other}`"))),
        }
    }
}

/// A regular increasing monotone linguistic quantifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantifierSpec {
    pub family: QuantifierFamily,
    pub alpha: f64,
}

impl QuantifierSpec {
    pub fn new(family: QuantifierFamily, alpha: f64) -> Result<Self> {
        let spec = Self { family, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Domain(format!(
                "quantifier alpha must be finite and > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Location of the quadratic quantifier's pole, if it falls in `[0, 1]`.
    pub fn singularity(&self) -> Option<f64> {
        match self.family {
            QuantifierFamily::Quadratic if self.alpha >= 1.0 => {
                Some(1.0 / (self.alpha * self.alpha))
            }
            _ => None,
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        quantifier_eval(self, r)
    }
}

/// Evaluates the quantifier at `r`.
///
/// The quadratic form is returned as written, before any rescaling, so
/// `Q(0) = 1` rather than 0. Near its pole the denominator is floored at
/// [`QUADRATIC_DENOM_FLOOR`] and a warning is logged.
pub fn quantifier_eval(spec: &QuantifierSpec, r: f64) -> Result<f64> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("quantifier argument {r} outside [0, 1]")));
    }
    let alpha = spec.alpha;
    Ok(match spec.family {
        QuantifierFamily::Basic => r.powf(alpha),
        QuantifierFamily::Quadratic => {
            let mut denom = 1.0 - alpha * r.sqrt();
            if denom.abs() < QUADRATIC_DENOM_FLOOR {
                log::warn!(
                    "quadratic quantifier denominator {denom:e} at r = {r} (alpha = {alpha}); \
                     clamped to {QUADRATIC_DENOM_FLOOR:e}"
                );
                denom = QUADRATIC_DENOM_FLOOR;
            }
            1.0 / denom
        }
        QuantifierFamily::Exponential => (-alpha * (1.0 - r)).exp(),
    })
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && (0.0..=1.0).contains(*w)))
        {
            return Err(Error::InvalidWeights(format!(
                "weight {w} at position {i} outside [0, 1]"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// Divides by the sum, then validates.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidWeights(format!(
                "cannot normalize weights with sum {sum}"
            )));
        }
        Self::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        Ok(Self(vec![1.0 / len as f64; len]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// OWA weights from a RIM quantifier: `w_c = Q(c/C) - Q((c-1)/C)`, rescaled.
pub fn owa_weights(spec: &QuantifierSpec, len: usize) -> Result<WeightVector> {
    spec.validate()?;
    if len == 0 {
        return Err(Error::Domain("OWA weight vector needs at least one position".into()));
    }
    if let Some(at) = spec.singularity() {
        // A pole exactly at r = 1 is handled by the clamp.
        if at < 1.0 {
            return Err(Error::Singularity { alpha: spec.alpha, at });
        }
    }
    let n = len as f64;
    let mut prev = quantifier_eval(spec, 0.0)?;
    let mut raw = Vec::with_capacity(len);
    for c in 1..=len {
        let q = quantifier_eval(spec, c as f64 / n)?;
        let w = q - prev;
        if w < 0.0 {
            return Err(Error::NegativeWeight { position: c, value: w });
        }
        raw.push(w);
        prev = q;
    }
    WeightVector::normalized(raw)
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Indices of `values` ordered from largest to smallest; ties keep index order.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    idx
}

pub fn owa(w: &WeightVector, a: &[f64]) -> Result<f64> {
    check_len("owa argument", w.len(), a.len())?;
    let order = descending_order(a);
    Ok(order
        .iter()
        .zip(w.as_slice())
        .map(|(&i, wc)| wc * a[i])
        .sum())
}

/// Induced OWA: positions are ordered by `u` (descending) and the matching
/// elements of `a` are aggregated.
pub fn iowa(w: &WeightVector, a: &[f64], u: &[f64]) -> Result<f64> {
    check_len("iowa argument", w.len(), a.len())?;
    check_len("iowa inducing variable", w.len(), u.len())?;
    let order = descending_order(u);
    Ok(order
        .iter()
        .zip(w.as_slice())
        .map(|(&i, wc)| wc * a[i])
        .sum())
}

pub fn wa(v: &WeightVector, a: &[f64]) -> Result<f64> {
    check_len("wa argument", v.len(), a.len())?;
    Ok(v.as_slice().iter().zip(a).map(|(vc, ac)| vc * ac).sum())
}

/// Blended OWAWA weights in sorted-position order.
///
/// `order[k]` is the original index that landed in sorted position `k`; the
/// fixed weight of that index is blended with the positional weight `w[k]`.
pub fn owawa_sorted_weights(
    w: &WeightVector,
    v: &WeightVector,
    order: &[usize],
    beta: f64,
) -> Result<Vec<f64>> {
    check_len("owawa fixed weights", w.len(), v.len())?;
    check_len("owawa ordering", w.len(), order.len())?;
    check_beta(beta)?;
    Ok(order
        .iter()
        .zip(w.as_slice())
        .map(|(&i, wc)| beta * wc + (1.0 - beta) * v[i])
        .collect())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta {beta} outside [0, 1]")));
    }
    Ok(())
}

pub fn owawa(w: &WeightVector, v: &WeightVector, a: &[f64], beta: f64) -> Result<f64> {
    check_len("owawa argument", w.len(), a.len())?;
    let order = descending_order(a);
    let blended = owawa_sorted_weights(w, v, &order, beta)?;
    Ok(order.iter().zip(&blended).map(|(&i, vc)| vc * a[i]).sum())
}
