//! Command-line surface. Flags override values from `--config` and `--preset`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use owadapt::aggregation::QuantifierFamily;
use owadapt::network::{Activation, WeightSchedule};

use crate::config::{AggregationKind, BaseKind, DataKind, ExperimentConfig, Preset};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "owadapt", version, about = "OWA adaptive loss experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and write metrics, history and checkpoint.
    Train(TrainArgs),
    /// Run every (family, alpha[, gamma]) x seed cell and write a long CSV.
    Sweep(SweepArgs),
    /// Average ranks, Friedman/Iman-Davenport and Holm tests over result tables.
    Compare(CompareArgs),
    /// Print OWA weights of a quantifier and their cumulative sums.
    Weights(WeightsArgs),
    /// Write a synthetic imbalanced dataset as CSV.
    GenData(GenDataArgs),
}

fn parse_family(s: &str) -> Result<QuantifierFamily, String> {
    s.parse().map_err(|e: owadapt::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: owadapt::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<WeightSchedule, String> {
    match s {
        "per-batch" | "batch" => Ok(WeightSchedule::PerBatch),
        "per-epoch" | "epoch" => Ok(WeightSchedule::PerEpoch),
        other => Err(format!("unknown schedule `{other}` (per-batch, per-epoch)")),
    }
}

/// Class proportions given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Proportions(pub Vec<f64>);

/// `C:p1,..,pC` or `p1,..,pC`.
pub fn parse_synthetic(s: &str) -> Result<Proportions, String> {
    let (count, list) = match s.split_once(':') {
        Some((c, rest)) => (
            Some(c.trim().parse::<usize>().map_err(|_| format!("bad class count in `{s}`"))?),
            rest,
        ),
        None => (None, s),
    };
    let props = list
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad proportion `{p}`")))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(c) = count {
        if c != props.len() {
            return Err(format!("{c} classes declared but {} proportions given", props.len()));
        }
    }
    Ok(Proportions(props))
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Synthetic Gaussian blobs with these class proportions, e.g. `3:0.9,0.09,0.01`.
    #[arg(long, value_name = "C:P1,..", value_parser = parse_synthetic, conflicts_with = "csv")]
    pub synthetic: Option<Proportions>,
    /// Total number of synthetic samples.
    #[arg(long)]
    pub n_total: Option<usize>,
    /// Standard deviation of each synthetic cluster.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Feature dimension of synthetic data.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Fixed data seed (default: the run seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Read features and labels from a CSV file.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// The CSV file has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Label column: `last`, a 0-based index, or a header name.
    #[arg(long)]
    pub label: Option<String>,
    /// Fraction of samples held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Skip feature standardization.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Defaults to start from.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Replicate seeds, comma separated or repeated.
    #[arg(long = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    pub outdir: Option<PathBuf>,

    #[command(flatten)]
    pub data: DataArgs,

    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,

    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// When class weights are re-sorted: per-batch or per-epoch.
    #[arg(long, value_parser = parse_schedule)]
    pub schedule: Option<WeightSchedule>,

    /// Base per-sample loss.
    #[arg(long, value_enum)]
    pub loss: Option<BaseKind>,
    /// Focal loss exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// How class losses are combined.
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationKind>,
    /// Quantifier family: basic, quadratic or exponential.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<QuantifierFamily>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// OWAWA blend between positional and fixed weights.
    #[arg(long)]
    pub beta: Option<f64>,
    /// OWAWA fixed weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub costs: Vec<f64>,
    /// Per-class loss multipliers, comma separated, summing to 1.
    #[arg(long, value_delimiter = ',')]
    pub class_weights: Vec<f64>,
}

impl ExperimentArgs {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.preset.unwrap_or_default(), self.config.as_deref())?;
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        set(&mut cfg.outdir, &self.outdir);
        apply_data(&self.data, cfg);
        if !self.hidden.is_empty() {
            cfg.model.hidden = self.hidden.clone();
        }
        set(&mut cfg.model.activation, &self.activation);
        let t = &mut cfg.train;
        set(&mut t.learning_rate, &self.lr);
        set(&mut t.momentum, &self.momentum);
        set(&mut t.epochs, &self.epochs);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.schedule, &self.schedule);
        let l = &mut cfg.loss;
        set(&mut l.base, &self.loss);
        set(&mut l.gamma, &self.gamma);
        set(&mut l.aggregation, &self.aggregation);
        set(&mut l.family, &self.family);
        set(&mut l.alpha, &self.alpha);
        set(&mut l.beta, &self.beta);
        if !self.costs.is_empty() {
            l.costs = Some(self.costs.clone());
        }
        if !self.class_weights.is_empty() {
            l.class_weights = Some(self.class_weights.clone());
        }
    }
}

pub fn apply_data(a: &DataArgs, cfg: &mut ExperimentConfig) {
    let d = &mut cfg.data;
    if let Some(p) = &a.synthetic {
        d.source = DataKind::Synthetic;
        d.proportions = p.0.clone();
    }
    if let Some(path) = &a.csv {
        d.source = DataKind::Csv;
        d.path = Some(path.clone());
    }
    if let Some(n) = a.n_total {
        d.n_total = n;
    }
    if let Some(s) = a.spread {
        d.spread = s;
    }
    if let Some(dim) = a.dim {
        d.dim = dim;
    }
    if a.data_seed.is_some() {
        d.seed = a.data_seed;
    }
    if a.no_header {
        d.header = false;
    }
    if let Some(l) = &a.label {
        d.label = l.clone();
    }
    if let Some(f) = a.test_fraction {
        d.test_fraction = f;
    }
    if a.no_standardize {
        d.standardize = false;
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Select alpha on a validation split (F1-macro) before the final fit.
    #[arg(long)]
    pub tune: bool,
    /// Candidate alphas for --tune, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tune_alphas: Vec<f64>,
    /// Use stratified k-fold instead of a single validation split.
    #[arg(long)]
    pub folds: Option<usize>,
}

impl TrainArgs {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = self.experiment.resolve()?;
        if self.tune {
            cfg.tuning.enabled = true;
        }
        if !self.tune_alphas.is_empty() {
            cfg.tuning.alphas = self.tune_alphas.clone();
        }
        if let Some(k) = self.folds {
            cfg.tuning.folds = k;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Quantifier families, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_family)]
    pub families: Vec<QuantifierFamily>,
    /// Alpha grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Gamma grid for the focal base, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Vec<f64>,
    /// Parallel training jobs (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV output path (default: <outdir>/sweep-<id>/sweep.csv).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

impl SweepArgs {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = self.experiment.resolve()?;
        if !self.families.is_empty() {
            cfg.sweep.families = self.families.clone();
        }
        if !self.alphas.is_empty() {
            cfg.sweep.alphas = self.alphas.clone();
        }
        if !self.gammas.is_empty() {
            cfg.sweep.gammas = self.gammas.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Wide CSV tables: `setting,<method>,..` header, one row per setting.
    pub tables: Vec<PathBuf>,
    /// Use the four bundled benchmark tables.
    #[arg(long)]
    pub shipped: bool,
    /// Long CSV with `setting` and `method` columns plus a value column.
    #[arg(long, value_name = "PATH")]
    pub long: Option<PathBuf>,
    /// Value column of the --long table.
    #[arg(long, default_value = "value")]
    pub metric: String,
    /// Smaller values are better.
    #[arg(long)]
    pub lower_is_better: bool,
    /// Significance level of the Holm procedure.
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// One-sided normal p-values for the Nemenyi z statistics.
    #[arg(long)]
    pub one_sided: bool,
    /// Friedman statistic without the tie correction.
    #[arg(long)]
    pub no_tie_correction: bool,
    /// Also write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: QuantifierFamily,
    #[arg(long)]
    pub alpha: f64,
    /// Number of classes (weight positions).
    #[arg(long, short = 'c')]
    pub classes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML configuration file (its [data] section is used).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, `-` for stdout.
    #[arg(long, short = 'o', default_value = "-")]
    pub out: PathBuf,
}
