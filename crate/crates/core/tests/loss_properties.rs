use ndarray::Array2;
use owadapt::aggregation::{owa_weights, QuantifierFamily, QuantifierSpec, WeightVector};
use owadapt::losses::{Aggregation, BaseLoss, ClassLoss, ClassLossVector, LossConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Straightforward re-derivation of the aggregated loss for fixed class ranking.
fn reference_loss(cfg: &LossConfig, scores: &Array2<f64>, labels: &[usize], order: &[usize]) -> f64 {
    let (m, c) = scores.dim();
    let mut f = vec![0.0; c];
    for i in 0..m {
        let row: Vec<f64> = (0..c).map(|j| scores[[i, j]]).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let p = ((row[labels[i]] - max).exp() / denom).max(1e-12);
        let term = match cfg.base {
            BaseLoss::CrossEntropy => p.ln(),
            BaseLoss::Focal { gamma } => (1.0 - p).powf(gamma) * p.ln(),
        };
        f[labels[i]] -= term / m as f64;
    }
    if let Some(cw) = &cfg.class_weights {
        for (v, w) in f.iter_mut().zip(cw.as_slice()) {
            *v *= w;
        }
    }
    match &cfg.aggregation {
        Aggregation::Mean => f.iter().sum::<f64>() / c as f64,
        Aggregation::Sum => f.iter().sum::<f64>(),
        Aggregation::Owa { quantifier } => {
            let w = owa_weights(quantifier, c).unwrap();
            order.iter().enumerate().map(|(k, &cls)| w[k] * f[cls]).sum()
        }
        Aggregation::Owawa {
            quantifier,
            costs,
            beta,
        } => {
            let w = owa_weights(quantifier, c).unwrap();
            order
                .iter()
                .enumerate()
                .map(|(k, &cls)| (beta * w[k] + (1.0 - beta) * costs[cls]) * f[cls])
                .sum()
        }
    }
}

fn central_differences(cfg: &LossConfig, scores: &Array2<f64>, labels: &[usize], order: &[usize]) -> Array2<f64> {
    let h = 1e-5;
    let mut out = Array2::zeros(scores.dim());
    for idx in ndarray::indices(scores.dim()) {
        let mut plus = scores.clone();
        let mut minus = scores.clone();
        plus[idx] += h;
        minus[idx] -= h;
        out[idx] = (reference_loss(cfg, &plus, labels, order) - reference_loss(cfg, &minus, labels, order)) / (2.0 * h);
    }
    out
}

fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let inf = |x: &Array2<f64>| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = inf(a).max(inf(b));
    if scale == 0.0 {
        0.0
    } else {
        inf(&(a - b)) / scale
    }
}

fn random_simplex(rng: &mut SplitMix64, len: usize) -> WeightVector {
    WeightVector::normalized((0..len).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

fn configs(rng: &mut SplitMix64, c: usize) -> Vec<LossConfig> {
    let bases = [
        BaseLoss::CrossEntropy,
        BaseLoss::Focal { gamma: 0.0 },
        BaseLoss::Focal { gamma: rng.random_range(1.0..5.0) },
    ];
    let mut out = Vec::new();
    for base in bases {
        let mut aggs = vec![Aggregation::Mean, Aggregation::Sum];
        for family in QuantifierFamily::ALL {
            let hi = if family == QuantifierFamily::Quadratic { 1.0 } else { 3.0 };
            let quantifier = QuantifierSpec::new(family, rng.random_range(0.1..hi)).unwrap();
            aggs.push(Aggregation::Owa { quantifier });
            aggs.push(Aggregation::Owawa {
                quantifier,
                costs: random_simplex(rng, c),
                beta: rng.random_range(0.0..1.0),
            });
        }
        for aggregation in aggs {
            let class_weights = rng.random_bool(0.5).then(|| random_simplex(rng, c));
            out.push(LossConfig {
                base,
                aggregation,
                class_weights,
            });
        }
    }
    out
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = SplitMix64::seed_from_u64(17);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _batch in 0..120 {
        let m = rng.random_range(1..=8);
        let c = rng.random_range(2..=6);
        let scores = Array2::from_shape_simple_fn((m, c), || rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        for cfg in configs(&mut rng, c) {
            let loss = ClassLoss::new(cfg.clone(), c).unwrap();
            let eval = loss.evaluate(scores.view(), &labels).unwrap();
            let order = eval.aggregated.order.clone();
            assert!(
                (eval.loss() - reference_loss(&cfg, &scores, &labels, &order)).abs() < 1e-12,
                "{cfg:?}"
            );
            let numeric = central_differences(&cfg, &scores, &labels, &order);
            let err = relative_error(&eval.grad, &numeric);
            assert!(err < 1e-6, "relative error {err:e} for {cfg:?}");
            worst = worst.max(err);
            checked += 1;
        }
    }
    assert!(checked >= 100 * 21);
    eprintln!("worst relative error over {checked} cases: {worst:e}");
}

fn batch() -> impl Strategy<Value = (Array2<f64>, Vec<usize>, usize)> {
    (2usize..=6, 1usize..=8).prop_flat_map(|(c, m)| {
        (
            prop::collection::vec(-4.0f64..4.0, m * c),
            prop::collection::vec(0..c, m),
        )
            .prop_map(move |(s, y)| (Array2::from_shape_vec((m, c), s).unwrap(), y, c))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn basic_alpha_one_equals_mean((scores, labels, c) in batch()) {
        let q = QuantifierSpec::new(QuantifierFamily::Basic, 1.0).unwrap();
        let owa = ClassLoss::new(LossConfig::owa(q), c).unwrap().evaluate(scores.view(), &labels).unwrap();
        let mean = ClassLoss::new(LossConfig::cross_entropy(), c).unwrap().evaluate(scores.view(), &labels).unwrap();
        prop_assert!((owa.loss() - mean.loss()).abs() <= 1e-12);
    }

    #[test]
    fn effective_weights_follow_the_ranking(
        (scores, labels, c) in batch(),
        alpha in 0.05f64..0.95,
    ) {
        // Basic with alpha < 1 gives non-increasing positional weights.
        let q = QuantifierSpec::new(QuantifierFamily::Basic, alpha).unwrap();
        let loss = ClassLoss::new(LossConfig::owa(q), c).unwrap();
        let eval = loss.evaluate(scores.view(), &labels).unwrap();
        let f = &eval.class_losses.values;
        let w = eval.aggregated.weights.as_slice();
        let top = eval.aggregated.order[0];
        prop_assert!(f.iter().all(|&v| v <= f[top]));
        prop_assert!(w.iter().all(|&x| x <= w[top]));
        let recomputed: f64 = w.iter().zip(f).map(|(a, b)| a * b).sum();
        prop_assert!((recomputed - eval.loss()).abs() <= 1e-12);
    }

    #[test]
    fn aggregate_is_monotone_in_each_class_loss(
        f in prop::collection::vec(0.0f64..5.0, 2..7),
        which in any::<prop::sample::Index>(),
        bump in 0.0f64..3.0,
        family in prop::sample::select(QuantifierFamily::ALL.to_vec()),
        alpha in 0.05f64..0.95,
    ) {
        let c = f.len();
        let loss = ClassLoss::new(LossConfig::owa(QuantifierSpec::new(family, alpha).unwrap()), c).unwrap();
        let base = ClassLossVector { values: f.clone(), counts: vec![1; c] };
        let agg = loss.aggregate(&base).unwrap();
        let mut raised = base.clone();
        raised.values[which.index(c)] += bump;
        let after = loss.aggregate_with_order(&raised, agg.order.clone()).unwrap();
        prop_assert!(after.loss >= agg.loss - 1e-15);
    }

    #[test]
    fn focal_gamma_zero_is_cross_entropy(
        (scores, labels, c) in batch(),
        family in prop::sample::select(QuantifierFamily::ALL.to_vec()),
        alpha in 0.05f64..0.95,
    ) {
        let q = QuantifierSpec::new(family, alpha).unwrap();
        let ce = ClassLoss::new(LossConfig::owa(q), c).unwrap().evaluate(scores.view(), &labels).unwrap();
        let fl = ClassLoss::new(LossConfig::owa(q).with_base(BaseLoss::Focal { gamma: 0.0 }), c)
            .unwrap()
            .evaluate(scores.view(), &labels)
            .unwrap();
        prop_assert_eq!(ce.loss().to_bits(), fl.loss().to_bits());
        prop_assert_eq!(&ce.class_losses.values, &fl.class_losses.values);
    }

    #[test]
    fn sum_mode_is_class_count_times_mean((scores, labels, c) in batch()) {
        let mean = ClassLoss::new(LossConfig::cross_entropy(), c).unwrap().evaluate(scores.view(), &labels).unwrap();
        let sum_cfg = LossConfig { aggregation: Aggregation::Sum, ..LossConfig::cross_entropy() };
        let sum = ClassLoss::new(sum_cfg, c).unwrap().evaluate(scores.view(), &labels).unwrap();
        prop_assert!((sum.loss() - c as f64 * mean.loss()).abs() <= 1e-12 * (1.0 + sum.loss()));
    }
}
