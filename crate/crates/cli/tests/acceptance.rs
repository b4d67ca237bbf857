//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any of them fails.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use owadapt::aggregation::{
    iowa, owa, owa_weights, owawa, wa, QuantifierFamily, QuantifierSpec, WeightVector,
};
use owadapt::losses::{Aggregation, BaseLoss, ClassLoss, LossConfig};
use owadapt::metrics::Metric;
use owadapt::stats::Outcome;
use owadapt_cli::args::CompareArgs;
use owadapt_cli::commands::{self, SweepRow};
use owadapt_cli::config::{AggregationKind, BaseKind, ExperimentConfig, Preset, ALPHA_GRID};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn within_time(v: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    let ok = elapsed < limit;
    verdict(
        v.pass && ok,
        format!("{} [{:.2?}, limit {:.0?}{}]", v.detail, elapsed, limit, if ok { "" } else { " EXCEEDED" }),
    )
}

fn compare_shipped() -> Vec<owadapt_cli::report::MetricBlock> {
    let args = CompareArgs {
        tables: vec![],
        shipped: true,
        long: None,
        metric: "value".into(),
        lower_is_better: false,
        beta: 0.05,
        one_sided: false,
        no_tie_correction: false,
        json: None,
    };
    commands::compare(&args, &mut std::io::sink()).expect("compare on the shipped tables")
}

// Average ranks (OWA, CE, FL) and average metrics per metric, as published.
const RANKS: [(Metric, [f64; 3]); 4] = [
    (Metric::Accuracy, [1.231, 2.846, 1.923]),
    (Metric::F1Macro, [1.231, 2.872, 1.897]),
    (Metric::MinRecall, [1.167, 2.859, 1.974]),
    (Metric::MinF1, [1.192, 2.962, 1.846]),
];
const AVG_METRICS: [[f64; 3]; 4] = [
    [76.793, 70.531, 75.147],
    [76.2, 69.474, 74.485],
    [67.997, 57.143, 64.171],
    [67.182, 55.548, 63.626],
];
const FRIEDMAN: [f64; 4] = [72.72414, 81.17113, 98.24555, 157.3316];
const METHODS: [&str; 3] = ["OWA", "CE", "FL"];

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let blocks = compare_shipped();
    let elapsed = start.elapsed();
    let mut worst_rank = 0.0f64;
    let mut worst_metric = 0.0f64;
    let mut problems = String::new();
    for (i, (metric, ranks)) in RANKS.iter().enumerate() {
        let b = &blocks[i];
        assert_eq!(b.title, metric.title());
        for (j, name) in METHODS.iter().enumerate() {
            let k = b.methods.iter().position(|m| m == name).expect("method column");
            let dr = (b.summary.avg_rank[k] - ranks[j]).abs();
            let dm = (b.summary.avg_metric[k] - AVG_METRICS[i][j]).abs();
            worst_rank = worst_rank.max(dr);
            worst_metric = worst_metric.max(dm);
            if dr > 0.005 || dm > 0.01 {
                let _ = write!(problems, " {}/{name}", metric.key());
            }
        }
    }
    let v = verdict(
        problems.is_empty(),
        format!("max |rank diff| {worst_rank:.4}, max |metric diff| {worst_metric:.4}{problems}"),
    );
    within_time(v, elapsed, Duration::from_secs(1))
}

fn criterion_2() -> Verdict {
    let blocks = compare_shipped();
    let mut pass = true;
    let mut parts = Vec::new();
    for (b, &want) in blocks.iter().zip(&FRIEDMAN) {
        let s = &b.summary;
        let (name, got, p) = if (s.iman_davenport_f - want).abs() <= 0.05 {
            ("Iman-Davenport F", s.iman_davenport_f, s.friedman_pvalue)
        } else if (s.friedman_chi2 - want).abs() <= 0.05 {
            ("chi-squared", s.friedman_chi2, s.friedman_chi2_pvalue)
        } else {
            pass = false;
            ("no match", s.iman_davenport_f, s.friedman_pvalue)
        };
        pass &= p < 1e-6;
        parts.push(format!("{}: {name} {got:.5} vs {want} (p {p:.1e})", b.title));
    }
    let rejects = blocks
        .iter()
        .flat_map(|b| &b.holm.comparisons)
        .filter(|c| c.outcome == Outcome::Reject)
        .count();
    let total: usize = blocks.iter().map(|b| b.holm.comparisons.len()).sum();
    pass &= rejects == 8 && total == 8;
    verdict(pass, format!("{}; Holm rejects {rejects}/{total}", parts.join("; ")))
}

// Loss recomputed from scratch for a fixed class order.
fn reference_loss(cfg: &LossConfig, scores: &Array2<f64>, labels: &[usize], order: &[usize]) -> f64 {
    let (m, c) = scores.dim();
    let mut f = vec![0.0; c];
    for i in 0..m {
        let max = (0..c).map(|j| scores[[i, j]]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..c).map(|j| (scores[[i, j]] - max).exp()).sum();
        let p = ((scores[[i, labels[i]]] - max).exp() / denom).max(1e-12);
        let phi = match cfg.base {
            BaseLoss::CrossEntropy => p.ln(),
            BaseLoss::Focal { gamma } => (1.0 - p).powf(gamma) * p.ln(),
        };
        f[labels[i]] -= phi / m as f64;
    }
    if let Some(cw) = &cfg.class_weights {
        for (v, w) in f.iter_mut().zip(cw.as_slice()) {
            *v *= w;
        }
    }
    match &cfg.aggregation {
        Aggregation::Mean => f.iter().sum::<f64>() / c as f64,
        Aggregation::Sum => f.iter().sum(),
        Aggregation::Owa { quantifier } => {
            let w = owa_weights(quantifier, c).unwrap();
            order.iter().zip(w.as_slice()).map(|(&k, wk)| wk * f[k]).sum()
        }
        Aggregation::Owawa { quantifier, costs, beta } => {
            let w = owa_weights(quantifier, c).unwrap();
            order
                .iter()
                .enumerate()
                .map(|(pos, &k)| (beta * w.as_slice()[pos] + (1.0 - beta) * costs.as_slice()[k]) * f[k])
                .sum()
        }
    }
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let batches = 100;
    for _ in 0..batches {
        let m = rng.random_range(1..=8);
        let c = rng.random_range(2..=6);
        let scores = Array2::from_shape_simple_fn((m, c), || rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        let costs = WeightVector::normalized((0..c).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap();
        for base in [BaseLoss::CrossEntropy, BaseLoss::Focal { gamma: rng.random_range(0.5..5.0) }] {
            let mut aggs = vec![Aggregation::Mean, Aggregation::Sum];
            for family in QuantifierFamily::ALL {
                let hi = if family == QuantifierFamily::Quadratic { 1.0 } else { 3.0 };
                let quantifier = QuantifierSpec::new(family, rng.random_range(0.1..hi)).unwrap();
                aggs.push(Aggregation::Owa { quantifier });
                aggs.push(Aggregation::Owawa {
                    quantifier,
                    costs: costs.clone(),
                    beta: rng.random_range(0.0..1.0),
                });
            }
            for aggregation in aggs {
                let cfg = LossConfig { base, aggregation, class_weights: None };
                let eval = ClassLoss::new(cfg.clone(), c).unwrap().evaluate(scores.view(), &labels).unwrap();
                let order = &eval.aggregated.order;
                let mut numeric = Array2::zeros((m, c));
                for idx in ndarray::indices((m, c)) {
                    let (mut plus, mut minus) = (scores.clone(), scores.clone());
                    plus[idx] += h;
                    minus[idx] -= h;
                    numeric[idx] = (reference_loss(&cfg, &plus, &labels, order)
                        - reference_loss(&cfg, &minus, &labels, order))
                        / (2.0 * h);
                }
                let inf = |x: &Array2<f64>| x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let scale = inf(&eval.grad).max(inf(&numeric));
                let err = if scale == 0.0 { 0.0 } else { inf(&(&eval.grad - &numeric)) / scale };
                worst = worst.max(err);
                cases += 1;
            }
        }
    }
    let v = verdict(
        worst < 1e-6,
        format!("{batches} batches, {cases} base x aggregation x family cases, worst relative error {worst:.2e}"),
    );
    within_time(v, start.elapsed(), Duration::from_secs(30))
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let tol = 1e-9;
    let mut rng = SplitMix64::seed_from_u64(99);
    let mut worst = 0.0f64;
    let trials = 5000;
    for _ in 0..trials {
        let n = rng.random_range(1..=12);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let w = WeightVector::normalized((0..n).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect()).unwrap();
        let v = WeightVector::normalized((0..n).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect()).unwrap();
        let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let x = owa(&w, &a).unwrap();
        worst = worst.max(lo - x).max(x - hi);

        let mean = a.iter().sum::<f64>() / n as f64;
        worst = worst.max((owa(&WeightVector::uniform(n).unwrap(), &a).unwrap() - mean).abs());

        let beta = rng.random_range(0.0..=1.0);
        let blend = beta * x + (1.0 - beta) * wa(&v, &a).unwrap();
        worst = worst.max((owawa(&w, &v, &a, beta).unwrap() - blend).abs());

        worst = worst.max((iowa(&w, &a, &a).unwrap() - x).abs());

        let family = QuantifierFamily::ALL[rng.random_range(0..3)];
        let hi_alpha = if family == QuantifierFamily::Quadratic { 1.0 } else { 5.0 };
        let spec = QuantifierSpec::new(family, rng.random_range(0.01..hi_alpha)).unwrap();
        let q = owa_weights(&spec, n).unwrap();
        worst = worst.max((q.as_slice().iter().sum::<f64>() - 1.0).abs());
    }
    let v = verdict(worst <= tol, format!("{trials} randomized trials, worst violation {worst:.2e}"));
    within_time(v, start.elapsed(), Duration::from_secs(10))
}

fn desk(outdir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.outdir = outdir.to_path_buf();
    cfg.seeds = (0..11).collect();
    cfg
}

fn ce(outdir: &Path) -> ExperimentConfig {
    let mut cfg = desk(outdir);
    cfg.loss.base = BaseKind::Ce;
    cfg.loss.aggregation = AggregationKind::Mean;
    cfg.tuning.enabled = false;
    cfg
}

fn owadapt_tuned(outdir: &Path) -> ExperimentConfig {
    let mut cfg = desk(outdir);
    cfg.loss.base = BaseKind::Ce;
    cfg.loss.aggregation = AggregationKind::Owa;
    cfg.loss.family = QuantifierFamily::Exponential;
    cfg.tuning.enabled = true;
    cfg.tuning.alphas = ALPHA_GRID.to_vec();
    cfg
}

fn criterion_5(root: &Path) -> Verdict {
    let start = Instant::now();
    let sink = &mut std::io::sink();
    let base = commands::train_config(&ce(&root.join("ce")), sink).expect("CE runs");
    let ours = commands::train_config(&owadapt_tuned(&root.join("owa")), sink).expect("OWA runs");
    let col = |runs: &[commands::RunArtifacts], m: Metric| median(runs.iter().map(|r| r.metrics.test.get(m)).collect());
    let (ce_rec, ce_f1) = (col(&base, Metric::MinRecall), col(&base, Metric::F1Macro));
    let (ow_rec, ow_f1) = (col(&ours, Metric::MinRecall), col(&ours, Metric::F1Macro));
    let alphas: Vec<String> = ours.iter().map(|r| format!("{}", r.metrics.alpha.unwrap())).collect();
    let v = verdict(
        ow_rec >= ce_rec && ow_f1 >= ce_f1 - 0.01,
        format!(
            "{} seeds, median min-recall OWA {ow_rec:.4} vs CE {ce_rec:.4}, median F1-macro OWA {ow_f1:.4} vs CE {ce_f1:.4}; tuned alphas [{}]",
            base.len(),
            alphas.join(", ")
        ),
    );
    within_time(v, start.elapsed(), Duration::from_secs(300))
}

fn criterion_6(root: &Path) -> Verdict {
    let start = Instant::now();
    let mut cfg = desk(&root.join("sweep"));
    cfg.loss.aggregation = AggregationKind::Owa;
    let csv = root.join("sweep.csv");
    commands::sweep_config(&cfg, None, Some(&csv), &mut std::io::sink()).expect("sweep");
    let rows: Vec<SweepRow> = commands::read_sweep_csv(&csv).expect("sweep csv");
    let expected = 3 * ALPHA_GRID.len() * cfg.seeds.len();
    let med = |family: QuantifierFamily, alpha: f64| {
        median(
            rows.iter()
                .filter(|r| r.family == family && r.alpha == alpha)
                .filter_map(|r| r.f1_macro)
                .collect(),
        )
    };
    let basic = med(QuantifierFamily::Basic, 0.2);
    let expo: Vec<f64> = ALPHA_GRID.iter().map(|&a| med(QuantifierFamily::Exponential, a)).collect();
    let lo = expo.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ok_rows = rows.iter().filter(|r| r.is_ok()).count();
    let v = verdict(
        rows.len() == expected && ok_rows == expected && basic < expo[0] && hi - lo <= 0.05,
        format!(
            "{ok_rows}/{expected} cells, median F1-macro basic@0.2 {basic:.4} vs exponential@0.2 {:.4}, exponential range {:.4} ({lo:.4}..{hi:.4})",
            expo[0],
            hi - lo
        ),
    );
    within_time(v, start.elapsed(), Duration::from_secs(600))
}

fn criterion_7(root: &Path) -> Verdict {
    let mut cfg = owadapt_tuned(&root.join("det"));
    cfg.seeds = vec![3, 7];
    cfg.tuning.alphas = vec![0.2, 0.8];
    cfg.train.epochs = 10;
    let read = |runs: &[commands::RunArtifacts]| -> Vec<(Vec<u8>, Vec<u8>)> {
        runs.iter()
            .map(|r| {
                (
                    std::fs::read(r.dir.join("history.csv")).unwrap(),
                    std::fs::read(r.dir.join("metrics.json")).unwrap(),
                )
            })
            .collect()
    };
    let first = read(&commands::train_config(&cfg, &mut std::io::sink()).expect("first run"));
    let second = read(&commands::train_config(&cfg, &mut std::io::sink()).expect("second run"));
    let same = first == second && !first.is_empty() && first.iter().all(|(h, m)| !h.is_empty() && !m.is_empty());
    verdict(
        same,
        format!("{} runs repeated, history.csv and metrics.json byte-identical: {same}", first.len()),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(u32, Box<dyn Fn() -> Verdict>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(|| criterion_5(root.path()))),
        (6, Box::new(|| criterion_6(root.path()))),
        (7, Box::new(|| criterion_7(root.path()))),
    ];
    let mut failed = 0;
    for (n, check) in &criteria {
        let v = check();
        println!("criterion {n}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
