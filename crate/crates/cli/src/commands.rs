//! Subcommand implementations. Each writes its human-readable output to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use owadapt::aggregation::{owa_weights, QuantifierFamily, QuantifierSpec};
use owadapt::data::{make_gaussian_blobs, write_csv};
use owadapt::fixtures::benchmark_table;
use owadapt::metrics::{Metric, MetricsReport};
use owadapt::network::EpochRecord;
use owadapt::stats::{ResultTable, Sidedness, TieCorrection};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{apply_data, CompareArgs, GenDataArgs, SweepArgs, TrainArgs, WeightsArgs};
use crate::config::{AggregationKind, BaseKind, DataKind, ExperimentConfig, Preset};
use crate::error::{io_err, CliError, CliResult};
use crate::experiment::{self, AlphaSelection, Prepared, RunResult};
use crate::output::{run_id, write_atomic};
use crate::report::{compare_table, render, CompareOptions, MetricBlock};

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CliResult<()> {
    out.write_fmt(text).map_err(|e| io_err("writing output", e))
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => { say($out, format_args!($($t)*)) };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub seed: u64,
    /// Quantifier parameter of the final fit, when one is used.
    pub alpha: Option<f64>,
    pub tuning: Option<AlphaSelection>,
    pub train: MetricsReport,
    pub test: MetricsReport,
}

/// Files written for one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: RunMetrics,
}

pub fn history_csv(history: &[EpochRecord]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in history {
        w.serialize(r).map_err(|e| io_err("formatting history", e))?;
    }
    w.into_inner().map_err(|e| io_err("formatting history", e.error()))
}

pub fn read_history_csv(path: &Path) -> CliResult<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<EpochRecord>, _>>()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_run(cfg: &ExperimentConfig, result: &RunResult) -> CliResult<RunArtifacts> {
    let resolved = cfg.for_seed(result.seed).to_toml();
    let id = run_id(&resolved);
    let dir = cfg.outdir.join(&id);
    let metrics = RunMetrics {
        run_id: id,
        seed: result.seed,
        alpha: result.loss.uses_quantifier().then_some(result.loss.alpha),
        tuning: result.tuning.clone(),
        train: result.train_metrics.clone(),
        test: result.test_metrics.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&metrics).map_err(|e| io_err("formatting metrics", e))?;
    json.push(b'\n');
    let mut checkpoint = Vec::new();
    result.net.write_checkpoint(&mut checkpoint)?;
    write_atomic(&dir.join("config.toml"), resolved.as_bytes())?;
    write_atomic(&dir.join("metrics.json"), &json)?;
    write_atomic(&dir.join("history.csv"), &history_csv(&result.history)?)?;
    write_atomic(&dir.join("checkpoint"), &checkpoint)?;
    Ok(RunArtifacts { dir, metrics })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<Vec<RunArtifacts>> {
    let cfg = args.resolve()?;
    train_config(&cfg, out)
}

pub fn train_config(cfg: &ExperimentConfig, out: &mut dyn Write) -> CliResult<Vec<RunArtifacts>> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let result = experiment::run(cfg, seed)?;
        let art = write_run(cfg, &result)?;
        let t = &art.metrics.test;
        say!(
            out,
            "seed {seed}: accuracy {:.4}  f1_macro {:.4}  min_recall {:.4}  min_f1 {:.4}{}  -> {}\n",
            t.accuracy,
            t.f1_macro,
            t.min_recall,
            t.min_f1,
            art.metrics.alpha.map_or(String::new(), |a| format!("  (alpha {a})")),
            art.dir.display()
        )?;
        runs.push(art);
    }
    if runs.len() > 1 {
        let col = |m: Metric| median(runs.iter().map(|r| r.metrics.test.get(m)).collect());
        say!(
            out,
            "median over {} seeds: accuracy {:.4}  f1_macro {:.4}  min_recall {:.4}  min_f1 {:.4}\n",
            runs.len(),
            col(Metric::Accuracy),
            col(Metric::F1Macro),
            col(Metric::MinRecall),
            col(Metric::MinF1)
        )?;
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: QuantifierFamily,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub seed: u64,
    /// `ok` or `error`
    pub status: String,
    pub accuracy: Option<f64>,
    pub f1_macro: Option<f64>,
    pub min_recall: Option<f64>,
    pub min_f1: Option<f64>,
    pub message: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn read_sweep_csv(path: &Path) -> CliResult<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<SweepRow>, _>>()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub csv: PathBuf,
    pub rows: Vec<SweepRow>,
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<SweepOutcome> {
    let cfg = args.resolve()?;
    sweep_config(&cfg, args.jobs, args.out.as_deref(), out)
}

pub fn sweep_config(
    cfg: &ExperimentConfig,
    jobs: Option<usize>,
    csv_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<SweepOutcome> {
    cfg.validate()?;
    cfg.validate_sweep()?;
    let gammas: Vec<Option<f64>> = match cfg.loss.base {
        BaseKind::Focal => cfg.sweep.gammas.iter().copied().map(Some).collect(),
        BaseKind::Ce => vec![None],
    };
    let mut cells = Vec::new();
    for &family in &cfg.sweep.families {
        for &alpha in &cfg.sweep.alphas {
            for &gamma in &gammas {
                for &seed in &cfg.seeds {
                    cells.push((family, alpha, gamma, seed));
                }
            }
        }
    }
    let prepared: Vec<(u64, Prepared)> = cfg
        .seeds
        .iter()
        .map(|&s| experiment::prepare(cfg, s).map(|p| (s, p)))
        .collect::<CliResult<_>>()?;

    let run_cell = |&(family, alpha, gamma, seed): &(QuantifierFamily, f64, Option<f64>, u64)| {
        let mut c = cfg.clone();
        c.tuning.enabled = false;
        if !c.loss.uses_quantifier() {
            c.loss.aggregation = AggregationKind::Owa;
        }
        c.loss.family = family;
        c.loss.alpha = alpha;
        if let Some(g) = gamma {
            c.loss.gamma = g;
        }
        let data = &prepared.iter().find(|(s, _)| *s == seed).expect("prepared seed").1;
        let row = |status: &str, m: Option<&MetricsReport>, message: String| SweepRow {
            family,
            alpha,
            gamma,
            seed,
            status: status.into(),
            accuracy: m.map(|m| m.accuracy),
            f1_macro: m.map(|m| m.f1_macro),
            min_recall: m.map(|m| m.min_recall),
            min_f1: m.map(|m| m.min_f1),
            message,
        };
        match experiment::run_on(&c, data, seed) {
            Ok(r) => row("ok", Some(&r.test_metrics), String::new()),
            Err(e) => row("error", None, e.to_string()),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let resolved = cfg.to_toml();
    let path = match csv_path {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = cfg.outdir.join(format!("sweep-{}", run_id(&resolved)));
            write_atomic(&dir.join("config.toml"), resolved.as_bytes())?;
            dir.join("sweep.csv")
        }
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| io_err("formatting sweep", e))?;
    }
    write_atomic(&path, &w.into_inner().map_err(|e| io_err("formatting sweep", e.error()))?)?;

    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    say!(out, "{} cells, {} failed -> {}\n", rows.len(), failed, path.display())?;
    say!(out, "median test F1-macro by family and alpha:\n")?;
    say!(out, "  {:<12}", "alpha")?;
    for a in &cfg.sweep.alphas {
        say!(out, " {a:>7}")?;
    }
    say!(out, "\n")?;
    let mut best: Option<(f64, QuantifierFamily, f64)> = None;
    for &family in &cfg.sweep.families {
        say!(out, "  {:<12}", family.name())?;
        for &alpha in &cfg.sweep.alphas {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.family == family && r.alpha == alpha)
                .filter_map(|r| r.f1_macro)
                .collect();
            if v.is_empty() {
                say!(out, " {:>7}", "-")?;
                continue;
            }
            let m = median(v);
            say!(out, " {m:>7.4}")?;
            if best.is_none_or(|(b, _, _)| m > b) {
                best = Some((m, family, alpha));
            }
        }
        say!(out, "\n")?;
    }
    match best {
        Some((m, family, alpha)) => say!(out, "best by median F1-macro: {family} alpha {alpha} ({m:.4})\n")?,
        None => return Err(CliError::Runtime("every sweep cell failed".into())),
    }
    Ok(SweepOutcome { csv: path, rows })
}

fn read_long_table(path: &Path, metric: &str, higher_is_better: bool) -> CliResult<ResultTable> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (si, mi, vi) = (col("setting")?, col("method")?, col(metric)?);
    let mut records = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("row {} is short", line + 2)));
        let value: f64 = field(vi)?
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {}: non-numeric `{metric}`", line + 2)))?;
        records.push((field(si)?.to_string(), field(mi)?.to_string(), value));
    }
    ResultTable::from_long(records, higher_is_better).map_err(|e| bad(e.to_string()))
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> CliResult<Vec<MetricBlock>> {
    let opts = CompareOptions {
        beta: args.beta,
        sides: if args.one_sided { Sidedness::OneSided } else { Sidedness::TwoSided },
        ties: if args.no_tie_correction { TieCorrection::Uncorrected } else { TieCorrection::Corrected },
    };
    let higher = !args.lower_is_better;
    let mut blocks = Vec::new();
    if args.shipped {
        for m in Metric::ALL {
            blocks.push(compare_table(m.title(), &benchmark_table(m), opts)?);
        }
    }
    for path in &args.tables {
        let table = ResultTable::load_csv(path, higher)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let title = path.file_stem().map_or("table".into(), |s| s.to_string_lossy().into_owned());
        blocks.push(compare_table(&title, &table, opts)?);
    }
    if let Some(path) = &args.long {
        let table = read_long_table(path, &args.metric, higher)?;
        blocks.push(compare_table(&args.metric, &table, opts)?);
    }
    if blocks.is_empty() {
        return Err(CliError::Usage("nothing to compare: give table paths, --long or --shipped".into()));
    }
    say!(out, "{}", render(&blocks))?;
    if let Some(path) = &args.json {
        let mut json = serde_json::to_vec_pretty(&blocks).map_err(|e| io_err("formatting report", e))?;
        json.push(b'\n');
        write_atomic(path, &json)?;
    }
    Ok(blocks)
}

pub fn weights(args: &WeightsArgs, out: &mut dyn Write) -> CliResult<Vec<f64>> {
    let spec = QuantifierSpec::new(args.family, args.alpha)?;
    let w = match owa_weights(&spec, args.classes) {
        Ok(w) => w,
        Err(owadapt::Error::Singularity { alpha, at }) => {
            log::warn!("quadratic quantifier with alpha {alpha} has a pole at r = {at:.4}");
            return Err(CliError::Usage(format!(
                "weights undefined: the quadratic quantifier with alpha {alpha} diverges at r = {at:.4} \
                 (alpha must be <= 1)"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    say!(out, "{} alpha {} over {} positions\n", args.family, args.alpha, args.classes)?;
    say!(out, "{:>8} {:>12} {:>12}\n", "position", "weight", "cumulative")?;
    let mut cum = 0.0;
    for (i, x) in w.as_slice().iter().enumerate() {
        cum += x;
        say!(out, "{:>8} {:>12.6} {:>12.6}\n", i + 1, x, cum)?;
    }
    Ok(w.into_inner())
}

pub fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(Preset::Reference, args.config.as_deref())?;
    apply_data(&args.data, &mut cfg);
    if cfg.data.source != DataKind::Synthetic {
        return Err(CliError::Usage("gen-data only generates synthetic data".into()));
    }
    let ds = make_gaussian_blobs(&cfg.data.imbalance_spec(args.seed))?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    if args.out.as_os_str() == "-" {
        out.write_all(&buf).map_err(|e| io_err("writing output", e))?;
    } else {
        write_atomic(&args.out, &buf)?;
        say!(
            out,
            "{} samples, class counts {:?} -> {}\n",
            ds.len(),
            ds.class_counts(),
            args.out.display()
        )?;
    }
    Ok(())
}
