//! Experiment configuration.
//!
//! A configuration is a TOML document. Every key is optional; missing keys
//! come from the selected preset. Resolution order: preset, then the config
//! file, then command-line flags.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! outdir = "runs"
//!
//! [data]
//! source = "synthetic"          # or "csv"
//! proportions = [0.9, 0.09, 0.01]
//! n_total = 3000
//! spread = 0.5
//! dim = 8
//! # seed = 7                    # fixed data seed; default is the run seed
//! # path = "train.csv"          # csv source
//! # header = true
//! # label = "last"              # "last", a 0-based column index, or a header name
//! test_fraction = 0.2
//! standardize = true
//!
//! [model]
//! hidden = [64]
//! activation = "relu"
//!
//! [train]
//! learning_rate = 0.003
//! momentum = 0.9
//! epochs = 5
//! batch_size = 32
//! schedule = "per-batch"        # or "per-epoch"
//!
//! [loss]
//! base = "ce"                   # or "focal"
//! gamma = 2.0
//! aggregation = "mean"          # mean, sum, owa, owawa
//! family = "exponential"        # basic, quadratic, exponential
//! alpha = 0.8
//! beta = 0.5                    # owawa blend
//! # costs = [0.2, 0.3, 0.5]     # owawa fixed weights, default uniform
//! # class_weights = [...]       # weighted cross-entropy multipliers
//!
//! [tuning]
//! enabled = false               # pick alpha on validation F1-macro
//! alphas = [0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
//! validation_fraction = 0.2
//! folds = 0                     # >= 2 switches to stratified k-fold
//!
//! [sweep]
//! families = ["basic", "quadratic", "exponential"]
//! alphas = [0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99]
//! gammas = [0.0, 1.0, 2.0, 5.0] # only used with base = "focal"
//! ```

use std::path::{Path, PathBuf};

use owadapt::aggregation::{QuantifierFamily, QuantifierSpec, WeightVector};
use owadapt::data::{ImbalanceSpec, LabelColumn};
use owadapt::losses::{Aggregation, BaseLoss, LossConfig};
use owadapt::network::{Activation, TrainConfig, WeightSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ALPHA_GRID: [f64; 8] = [0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99];
pub const GAMMA_GRID: [f64; 4] = [0.0, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// SGD settings of the original image experiments: lr 0.003, momentum 0.9, 5 epochs.
    #[default]
    Reference,
    /// Same optimizer with lr 0.03 and 50 epochs, 11 seeds, for the synthetic task.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Ce,
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Sum,
    Owa,
    Owawa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataKind,
    pub proportions: Vec<f64>,
    pub n_total: usize,
    pub spread: f64,
    pub dim: usize,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub header: bool,
    pub label: String,
    pub test_fraction: f64,
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataKind::Synthetic,
            proportions: vec![0.9, 0.09, 0.01],
            n_total: 3000,
            spread: 0.5,
            dim: 8,
            seed: None,
            path: None,
            header: true,
            label: "last".into(),
            test_fraction: 0.2,
            standardize: true,
        }
    }
}

impl DataConfig {
    pub fn imbalance_spec(&self, run_seed: u64) -> ImbalanceSpec {
        ImbalanceSpec {
            class_proportions: self.proportions.clone(),
            n_total: self.n_total,
            cluster_spread: self.spread,
            dim: self.dim,
            seed: self.seed.unwrap_or(run_seed),
        }
    }

    pub fn label_column(&self) -> LabelColumn {
        self.label.parse().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: WeightSchedule,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            momentum: 0.9,
            epochs: 5,
            batch_size: 32,
            schedule: WeightSchedule::PerBatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub base: BaseKind,
    pub gamma: f64,
    pub aggregation: AggregationKind,
    pub family: QuantifierFamily,
    pub alpha: f64,
    pub beta: f64,
    pub costs: Option<Vec<f64>>,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            base: BaseKind::Ce,
            gamma: 2.0,
            aggregation: AggregationKind::Mean,
            family: QuantifierFamily::Exponential,
            alpha: 0.8,
            beta: 0.5,
            costs: None,
            class_weights: None,
        }
    }
}

impl LossSection {
    pub fn uses_quantifier(&self) -> bool {
        matches!(self.aggregation, AggregationKind::Owa | AggregationKind::Owawa)
    }

    pub fn to_loss_config(&self, classes: usize) -> CliResult<LossConfig> {
        let base = match self.base {
            BaseKind::Ce => BaseLoss::CrossEntropy,
            BaseKind::Focal => BaseLoss::Focal { gamma: self.gamma },
        };
        let weights = |name: &str, v: &[f64]| {
            WeightVector::new(v.to_vec()).map_err(|e| CliError::Usage(format!("loss.{name}: {e}")))
        };
        let quantifier = || {
            QuantifierSpec::new(self.family, self.alpha).map_err(|e| CliError::Usage(e.to_string()))
        };
        let aggregation = match self.aggregation {
            AggregationKind::Mean => Aggregation::Mean,
            AggregationKind::Sum => Aggregation::Sum,
            AggregationKind::Owa => Aggregation::Owa {
                quantifier: quantifier()?,
            },
            AggregationKind::Owawa => Aggregation::Owawa {
                quantifier: quantifier()?,
                costs: match &self.costs {
                    Some(c) => weights("costs", c)?,
                    None => WeightVector::uniform(classes)?,
                },
                beta: self.beta,
            },
        };
        let config = LossConfig {
            base,
            aggregation,
            class_weights: self
                .class_weights
                .as_deref()
                .map(|c| weights("class_weights", c))
                .transpose()?,
        };
        config.validate(classes)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub enabled: bool,
    pub alphas: Vec<f64>,
    pub validation_fraction: f64,
    pub folds: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            alphas: ALPHA_GRID.to_vec(),
            validation_fraction: 0.2,
            folds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub families: Vec<QuantifierFamily>,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            families: QuantifierFamily::ALL.to_vec(),
            alphas: ALPHA_GRID.to_vec(),
            gammas: GAMMA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub outdir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub loss: LossSection,
    pub tuning: TuningConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Reference)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seeds: vec![0],
            outdir: PathBuf::from("runs"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            loss: LossSection::default(),
            tuning: TuningConfig::default(),
            sweep: SweepConfig::default(),
        };
        match preset {
            Preset::Reference => base,
            Preset::Desk => Self {
                seeds: (0..11).collect(),
                train: TrainSection {
                    learning_rate: 0.03,
                    epochs: 50,
                    ..base.train.clone()
                },
                ..base
            },
        }
    }

    /// Preset overlaid with the TOML document in `path`.
    pub fn load(preset: Preset, path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::preset(preset));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(preset, &text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn from_toml(preset: Preset, text: &str) -> CliResult<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        merge(&mut base, overlay);
        base.try_into().map_err(|e: toml::de::Error| CliError::Usage(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Copy of `self` restricted to a single seed, as written next to run outputs.
    pub fn for_seed(&self, seed: u64) -> Self {
        Self {
            seeds: vec![seed],
            ..self.clone()
        }
    }

    pub fn train_config(&self, loss: LossConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            loss,
            schedule: self.train.schedule,
        }
    }

    /// Range checks that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let d = &self.data;
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return bad(format!("data.test_fraction {} outside (0, 1)", d.test_fraction));
        }
        match d.source {
            DataKind::Synthetic => d
                .imbalance_spec(0)
                .validate()
                .map_err(|e| CliError::Usage(format!("data: {e}")))?,
            DataKind::Csv => {
                if d.path.is_none() {
                    return bad("data.source = \"csv\" needs data.path".into());
                }
            }
        }
        if self.model.hidden.contains(&0) {
            return bad("model.hidden layer widths must be positive".into());
        }
        self.train_config(LossConfig::cross_entropy(), 0)
            .validate()
            .map_err(|e| CliError::Usage(format!("train: {e}")))?;
        if self.loss.base == BaseKind::Focal && !(self.loss.gamma >= 0.0) {
            return bad(format!("loss.gamma must be >= 0, got {}", self.loss.gamma));
        }
        if self.loss.uses_quantifier() {
            QuantifierSpec::new(self.loss.family, self.loss.alpha)
                .map_err(|e| CliError::Usage(format!("loss: {e}")))?;
        }
        let t = &self.tuning;
        if t.enabled {
            if !self.loss.uses_quantifier() {
                return bad("tuning needs loss.aggregation = \"owa\" or \"owawa\"".into());
            }
            if t.alphas.is_empty() || t.alphas.iter().any(|a| !(*a > 0.0)) {
                return bad("tuning.alphas must be non-empty and positive".into());
            }
            if t.folds == 1 {
                return bad("tuning.folds must be 0 (single split) or >= 2".into());
            }
            if t.folds == 0 && !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
                return bad(format!(
                    "tuning.validation_fraction {} outside (0, 1)",
                    t.validation_fraction
                ));
            }
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> CliResult<()> {
        let s = &self.sweep;
        if s.families.is_empty() || s.alphas.is_empty() {
            return Err(CliError::Usage("sweep grid is empty".into()));
        }
        if s.alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(CliError::Usage("sweep alphas must be positive".into()));
        }
        if self.loss.base == BaseKind::Focal
            && (s.gammas.is_empty() || s.gammas.iter().any(|g| !(*g >= 0.0)))
        {
            return Err(CliError::Usage(
                "sweep gammas must be non-empty and >= 0 for the focal base".into(),
            ));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in [Preset::Reference, Preset::Desk] {
            let cfg = ExperimentConfig::preset(p);
            let back = ExperimentConfig::from_toml(Preset::Reference, &cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_values_overlay_the_preset() {
        let cfg = ExperimentConfig::from_toml(
            Preset::Desk,
            "seeds = [3]\n[train]\nepochs = 7\n[loss]\naggregation = \"owa\"\nfamily = \"basic\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.learning_rate, 0.03);
        assert_eq!(cfg.loss.family, QuantifierFamily::Basic);
        assert_eq!(cfg.loss.alpha, 0.8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(Preset::Reference, "[train]\nepoch = 3\n").is_err());
        assert!(ExperimentConfig::from_toml(Preset::Reference, "[loss]\nfamily = \"cubic\"\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        cfg.sweep.alphas.clear();
        assert!(cfg.validate_sweep().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.tuning.enabled = true;
        assert!(cfg.validate().is_err());
        cfg.loss.aggregation = AggregationKind::Owa;
        cfg.validate().unwrap();
        cfg.data.test_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn owawa_costs_default_to_uniform() {
        let s = LossSection {
            aggregation: AggregationKind::Owawa,
            ..LossSection::default()
        };
        match s.to_loss_config(4).unwrap().aggregation {
            Aggregation::Owawa { costs, .. } => assert_eq!(costs.as_slice(), &[0.25; 4]),
            other => panic!("{other:?}"),
        }
    }
}
