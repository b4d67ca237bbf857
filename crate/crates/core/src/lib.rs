//! Class-level loss aggregation with ordered weighted averaging.
//!
//! A classifier's per-class losses are sorted in decreasing order and combined
//! with positional weights drawn from a regular increasing monotone (RIM)
//! quantifier. Uniform weights recover the usual mean loss; other weight
//! profiles shift emphasis between the best and worst served classes.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod fixtures;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod stats;

pub use aggregation::{owa, owa_weights, owawa, QuantifierFamily, QuantifierSpec, WeightVector};
pub use data::{Dataset, ImbalanceSpec};
pub use error::{Error, Result};
pub use losses::{Aggregation, BaseLoss, ClassLoss, LossConfig};
pub use metrics::{confusion, ConfusionMatrix, Metric, MetricsReport};
pub use network::{fit, Activation, Mlp, TrainConfig, WeightSchedule};
pub use stats::{holm, summarize, ResultTable};
