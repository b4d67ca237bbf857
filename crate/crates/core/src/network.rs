//! A small fully connected classifier trained with mini-batch SGD + momentum.
//!
//! Each training step runs: forward pass, softmax, per-class losses,
//! aggregation (sorting the class losses and assigning the quantifier
//! weights), gradient with the assignment held fixed, backpropagation, and
//! the momentum update `v <- mu * v - lr * g; theta <- theta + v`.
//!
//! # Randomness
//!
//! All randomness comes from SplitMix64 (64-bit state; increment
//! `0x9E3779B97F4A7C15`, output mix multipliers `0xBF58476D1CE4E5B9` and
//! `0x94D049BB133111EB`). Parameter initialization draws from a generator
//! seeded with `seed`; per-epoch shuffling uses one seeded with
//! `seed ^ SHUFFLE_STREAM`. Shuffling is the Fisher-Yates implementation of
//! `rand::seq::SliceRandom`.
//!
//! # Checkpoint format
//!
//! Plain UTF-8 text, one record per line, fields separated by single spaces:
//!
//! ```text
//! owadapt-checkpoint 1
//! activation <relu|tanh>
//! layers <L>
//! layer <d_in> <d_out>        # repeated L times, each followed by:
//! <d_out weights>             #   d_in rows of the d_in x d_out weight matrix
//! <d_out biases>              #   one bias row
//! ```
//!
//! Numbers are written in Rust's shortest round-trip scientific notation
//! (`{:e}`), so reading a checkpoint back reproduces every parameter bit for
//! bit. Hidden layers apply the activation; the last layer is linear.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::aggregation::{descending_order, WeightVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{ClassLoss, LossConfig};
use crate::metrics::{confusion, MetricsReport};

pub const CHECKPOINT_MAGIC: &str = "owadapt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// XOR-ed into the run seed to derive the shuffling stream.
pub const SHUFFLE_STREAM: u64 = 0x5348_5546_464C_4531;

/// Numerically stable softmax of one score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_rows(scores: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = scores.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|x| x.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
        }
    }

    fn derivative(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Activation::Tanh => z.mapv(|x| {
                let t = x.tanh();
                1.0 - t * t
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Domain(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `d_in x d_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weights: Array2::zeros((d_in, d_out)),
            bias: Array1::zeros(d_out),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    hidden_pre: Vec<Array2<f64>>,
}

/// Parameter-shaped buffer, used for both gradients and momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBuffer {
    pub layers: Vec<Dense>,
}

impl ParamBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }
}

pub type Gradients = ParamBuffer;
pub type MomentumState = ParamBuffer;

impl Mlp {
    pub fn new(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i}: bias length {} but {} outputs",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// All-zero network with the given layer widths (`dims[0]` is the input).
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Dimension("need input and output widths".into()));
        }
        Self::new(
            dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect(),
            activation,
        )
    }

    /// Uniform initialization in `+-sqrt(6 / (d_in + d_out))`, biases zero.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims, activation)?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.input_dim() + layer.output_dim()) as f64).sqrt();
            let dist = Uniform::new(-limit, limit).expect("finite positive limit");
            layer.weights.mapv_inplace(|_| dist.sample(&mut rng));
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            inputs.push(a);
            if i == last {
                return Ok((z, ForwardCache { inputs, hidden_pre }));
            }
            a = self.activation.apply(&z);
            hidden_pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Arg-max class per row (lowest index wins ties).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let scores = self.scores(x)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &s)| {
                        if s > best.1 {
                            (j, s)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    /// Backpropagates `grad_scores` (d loss / d scores) to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_scores: &Array2<f64>) -> Result<Gradients> {
        let batch = cache.inputs[0].nrows();
        if grad_scores.dim() != (batch, self.output_dim()) {
            return Err(Error::Dimension(format!(
                "score gradient has shape {:?}, expected {:?}",
                grad_scores.dim(),
                (batch, self.output_dim())
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_scores.clone();
        for i in (0..self.layers.len()).rev() {
            grads.push(Dense {
                weights: cache.inputs[i].t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                delta = delta.dot(&self.layers[i].weights.t())
                    * self.activation.derivative(&cache.hidden_pre[i - 1]);
            }
        }
        grads.reverse();
        Ok(ParamBuffer { layers: grads })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer: weights (row-major), then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        writeln!(out, "activation {}", self.activation.name())?;
        writeln!(out, "layers {}", self.layers.len())?;
        for l in &self.layers {
            writeln!(out, "layer {} {}", l.input_dim(), l.output_dim())?;
            for row in l.weights.rows() {
                write_row(&mut out, row.iter())?;
            }
            write_row(&mut out, l.bias.iter())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Parse {
                    row: 0,
                    message: format!("unexpected end of checkpoint, expected {what}"),
                }),
            }
        };
        let (row, header) = next("header")?;
        let version = keyed(&header, CHECKPOINT_MAGIC, row)?;
        if version != [CHECKPOINT_VERSION.to_string()] {
            return Err(Error::Parse {
                row,
                message: format!("unsupported checkpoint version {version:?}"),
            });
        }
        let (row, line) = next("activation")?;
        let activation = match keyed(&line, "activation", row)?.as_slice() {
            [name] => name.parse().map_err(|e: Error| Error::Parse {
                row,
                message: e.to_string(),
            })?,
            _ => return Err(parse_err(row, "malformed activation line")),
        };
        let (row, line) = next("layer count")?;
        let count = single_usize(&keyed(&line, "layers", row)?, row)?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (row, line) = next("layer header")?;
            let dims = keyed(&line, "layer", row)?;
            let (d_in, d_out) = match dims.as_slice() {
                [a, b] => (parse_usize(a, row)?, parse_usize(b, row)?),
                _ => return Err(parse_err(row, "layer line needs two dimensions")),
            };
            let mut weights = Array2::zeros((d_in, d_out));
            for mut w_row in weights.rows_mut() {
                let (row, line) = next("weight row")?;
                let values = parse_row(&line, d_out, row)?;
                w_row.iter_mut().zip(values).for_each(|(w, v)| *w = v);
            }
            let (row, line) = next("bias row")?;
            let bias = Array1::from(parse_row(&line, d_out, row)?);
            layers.push(Dense { weights, bias });
        }
        Self::new(layers, activation)
    }
}

fn write_row<'a, W: Write>(out: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let line: Vec<String> = values.map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

fn parse_err(row: usize, message: &str) -> Error {
    Error::Parse {
        row,
        message: message.to_string(),
    }
}

fn keyed(line: &str, key: &str, row: usize) -> Result<Vec<String>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(parse_err(row, &format!("expected `{key}` record")));
    }
    Ok(parts.map(str::to_string).collect())
}

fn parse_usize(s: &str, row: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(row, &format!("invalid integer `{s}`")))
}

fn single_usize(parts: &[String], row: usize) -> Result<usize> {
    match parts {
        [s] => parse_usize(s, row),
        _ => Err(parse_err(row, "expected a single integer")),
    }
}

fn parse_row(line: &str, expected: usize, row: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| parse_err(row, &format!("invalid number `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(parse_err(
            row,
            &format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

/// When the class-to-weight assignment is recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSchedule {
    /// Re-sort every mini-batch.
    #[default]
    PerBatch,
    /// Sort once per epoch from the class losses on the whole training set.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    #[serde(default)]
    pub schedule: WeightSchedule,
}

impl TrainConfig {
    /// SGD settings of the original CNN experiments: lr 0.003, momentum 0.9,
    /// five epochs. Batch size 32.
    pub fn reference(loss: LossConfig) -> Self {
        Self {
            learning_rate: 0.003,
            momentum: 0.9,
            epochs: 5,
            batch_size: 32,
            seed: 0,
            loss,
            schedule: WeightSchedule::PerBatch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Domain(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Weight given to each class in this step.
    pub weights: WeightVector,
}

/// One forward/backward/update step on a mini-batch.
///
/// `order` fixes the class ranking (per-epoch schedule); `None` sorts the
/// batch's own class losses. `step` is only used for diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    net: &mut Mlp,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    loss: &ClassLoss,
    learning_rate: f64,
    momentum: f64,
    velocity: &mut MomentumState,
    order: Option<&[usize]>,
    step: usize,
) -> Result<StepOutcome> {
    if x.nrows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} input rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    let (scores, cache) = net.forward(x)?;
    let probs = softmax_rows(scores.view());
    let f = loss.class_losses(probs.view(), labels)?;
    let agg = match order {
        Some(o) => loss.aggregate_with_order(&f, o.to_vec())?,
        None => loss.aggregate(&f)?,
    };
    if !agg.loss.is_finite() {
        return Err(Error::Diverged {
            step,
            loss: agg.loss,
            params: Box::new(net.clone()),
        });
    }
    let grad_scores = loss.gradient(&agg, probs.view(), labels)?;
    let grads = net.backward(&cache, &grad_scores)?;
    for ((layer, v), g) in net
        .layers
        .iter_mut()
        .zip(&mut velocity.layers)
        .zip(&grads.layers)
    {
        v.weights.zip_mut_with(&g.weights, |v, g| *v = momentum * *v - learning_rate * g);
        v.bias.zip_mut_with(&g.bias, |v, g| *v = momentum * *v - learning_rate * g);
        layer.weights += &v.weights;
        layer.bias += &v.bias;
    }
    Ok(StepOutcome {
        loss: agg.loss,
        weights: agg.weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean step loss over the epoch, weighted by batch size.
    pub loss: f64,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub min_recall: f64,
    pub min_f1: f64,
}

pub fn evaluate(net: &Mlp, data: &Dataset) -> Result<MetricsReport> {
    let pred = net.predict(data.features.view())?;
    Ok(MetricsReport::from_confusion(&confusion(
        &data.labels,
        &pred,
        data.num_classes(),
    )?))
}

/// Trains `net` on `data` for `cfg.epochs` epochs.
pub fn fit(mut net: Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, Vec<EpochRecord>)> {
    cfg.validate()?;
    let classes = data.num_classes();
    if net.output_dim() != classes || net.input_dim() != data.dim() {
        return Err(Error::Dimension(format!(
            "network maps {} -> {} but data has {} features and {classes} classes",
            net.input_dim(),
            net.output_dim(),
            data.dim()
        )));
    }
    if cfg.epochs == 0 {
        return Ok((net, Vec::new()));
    }
    let counts = data.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Validation(format!("class {c} has no training samples")));
    }
    let loss = ClassLoss::new(cfg.loss.clone(), classes)?;
    let mut velocity = ParamBuffer::zeros_like(&net);
    let mut rng = SplitMix64::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let order = match cfg.schedule {
            WeightSchedule::PerBatch => None,
            WeightSchedule::PerEpoch => {
                let probs = softmax_rows(net.scores(data.features.view())?.view());
                let f = loss.class_losses(probs.view(), &data.labels)?;
                Some(descending_order(&f.values))
            }
        };
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let x = data.features.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let out = train_step(
                &mut net,
                x.view(),
                &y,
                &loss,
                cfg.learning_rate,
                cfg.momentum,
                &mut velocity,
                order.as_deref(),
                step,
            )?;
            loss_sum += out.loss * batch.len() as f64;
            step += 1;
        }
        let report = evaluate(&net, data)?;
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: report.accuracy,
            f1_macro: report.f1_macro,
            min_recall: report.min_recall,
            min_f1: report.min_f1,
        });
    }
    Ok((net, history))
}
