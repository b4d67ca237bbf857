//! One training run: data, split, optional alpha selection, fit, evaluation.
//!
//! Seeds derived from the run seed `s`:
//! data generation `s` (unless `data.seed` is set), train/test split `s`,
//! validation split `s + 1`, network initialization and shuffling `s`.

use owadapt::data::{
    load_csv, make_gaussian_blobs, stratified_kfold, stratified_split, Dataset, Standardizer,
};
use owadapt::losses::LossConfig;
use owadapt::metrics::MetricsReport;
use owadapt::network::{evaluate, fit, EpochRecord, Mlp};
use serde::{Deserialize, Serialize};

use crate::config::{DataKind, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Train and test partitions, standardized with training statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_data(cfg: &ExperimentConfig, seed: u64) -> CliResult<Dataset> {
    match cfg.data.source {
        DataKind::Synthetic => Ok(make_gaussian_blobs(&cfg.data.imbalance_spec(seed))?),
        DataKind::Csv => {
            let path = cfg
                .data
                .path
                .as_ref()
                .ok_or_else(|| CliError::Usage("csv data source without a path".into()))?;
            load_csv(path, cfg.data.header, &cfg.data.label_column())
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> CliResult<Prepared> {
    let data = load_data(cfg, seed)?;
    let (train, test) = stratified_split(&data, 1.0 - cfg.data.test_fraction, seed)?;
    if cfg.data.standardize {
        let st = Standardizer::fit(&train)?;
        Ok(Prepared {
            train: st.transform(&train)?,
            test: st.transform(&test)?,
        })
    } else {
        Ok(Prepared { train, test })
    }
}

pub fn dims(cfg: &ExperimentConfig, data: &Dataset) -> Vec<usize> {
    let mut d = vec![data.dim()];
    d.extend(&cfg.model.hidden);
    d.push(data.num_classes());
    d
}

pub fn fit_model(
    cfg: &ExperimentConfig,
    loss: LossConfig,
    train: &Dataset,
    seed: u64,
) -> CliResult<(Mlp, Vec<EpochRecord>)> {
    let net = Mlp::init(&dims(cfg, train), cfg.model.activation, seed)?;
    Ok(fit(net, train, &cfg.train_config(loss, seed))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub alpha: f64,
    pub validation_f1_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub scores: Vec<AlphaScore>,
}

/// Picks the alpha with the best validation F1-macro; ties go to the
/// earlier grid entry.
pub fn select_alpha(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> CliResult<AlphaSelection> {
    let t = &cfg.tuning;
    let folds: Vec<(Dataset, Dataset)> = if t.folds >= 2 {
        stratified_kfold(train, t.folds, seed.wrapping_add(1))?
    } else {
        vec![stratified_split(train, 1.0 - t.validation_fraction, seed.wrapping_add(1))?]
    };
    let mut scores = Vec::with_capacity(t.alphas.len());
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &t.alphas {
        let mut loss = cfg.loss.clone();
        loss.alpha = alpha;
        let mut total = 0.0;
        for (fit_part, val_part) in &folds {
            let config = loss.to_loss_config(fit_part.num_classes())?;
            let (net, _) = fit_model(cfg, config, fit_part, seed)?;
            total += evaluate(&net, val_part)?.f1_macro;
        }
        let score = total / folds.len() as f64;
        scores.push(AlphaScore {
            alpha,
            validation_f1_macro: score,
        });
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, alpha));
        }
    }
    let (_, alpha) = best.ok_or_else(|| CliError::Usage("empty tuning grid".into()))?;
    Ok(AlphaSelection { alpha, scores })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub net: Mlp,
    pub history: Vec<EpochRecord>,
    pub train_metrics: MetricsReport,
    pub test_metrics: MetricsReport,
    pub tuning: Option<AlphaSelection>,
    /// Loss settings actually used for the final fit.
    pub loss: crate::config::LossSection,
}

pub fn run_on(cfg: &ExperimentConfig, data: &Prepared, seed: u64) -> CliResult<RunResult> {
    let tuning = if cfg.tuning.enabled {
        Some(select_alpha(cfg, &data.train, seed)?)
    } else {
        None
    };
    let mut loss = cfg.loss.clone();
    if let Some(sel) = &tuning {
        loss.alpha = sel.alpha;
    }
    let config = loss.to_loss_config(data.train.num_classes())?;
    let (net, history) = fit_model(cfg, config, &data.train, seed)?;
    Ok(RunResult {
        seed,
        train_metrics: evaluate(&net, &data.train)?,
        test_metrics: evaluate(&net, &data.test)?,
        net,
        history,
        tuning,
        loss,
    })
}

pub fn run(cfg: &ExperimentConfig, seed: u64) -> CliResult<RunResult> {
    run_on(cfg, &prepare(cfg, seed)?, seed)
}
