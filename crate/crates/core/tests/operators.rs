use owadapt::aggregation::{
    descending_order, iowa, owa, owa_weights, owawa, quantifier_eval, wa, QuantifierFamily,
    QuantifierSpec, WeightVector,
};
use proptest::prelude::*;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, len)
}

fn weights(len: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.001f64..1.0, len).prop_map(|raw| WeightVector::normalized(raw).unwrap())
}

fn sized() -> impl Strategy<Value = (WeightVector, WeightVector, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| (weights(n), weights(n), values(n)))
}

/// Quantifier parameters inside each family's non-singular range.
fn spec() -> impl Strategy<Value = QuantifierSpec> {
    prop_oneof![
        (0.01f64..10.0).prop_map(|a| QuantifierSpec::new(QuantifierFamily::Basic, a).unwrap()),
        (0.01f64..1.0).prop_map(|a| QuantifierSpec::new(QuantifierFamily::Quadratic, a).unwrap()),
        (0.01f64..10.0).prop_map(|a| QuantifierSpec::new(QuantifierFamily::Exponential, a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn quantifier_weights_are_a_distribution(spec in spec(), len in 1usize..40) {
        let w = owa_weights(&spec, len).unwrap();
        prop_assert_eq!(w.len(), len);
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(w.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn quantifiers_are_monotone(spec in spec(), len in 1usize..40) {
        let q: Vec<f64> = (0..=len)
            .map(|c| quantifier_eval(&spec, c as f64 / len as f64).unwrap())
            .collect();
        prop_assert!(q.windows(2).all(|p| p[1] >= p[0]), "{:?}", q);
    }

    #[test]
    fn owa_is_bounded((w, _, a) in sized()) {
        let r = owa(&w, &a).unwrap();
        let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-9 <= r && r <= hi + 1e-9);
    }

    #[test]
    fn uniform_owa_is_the_mean(a in (1usize..20).prop_flat_map(values)) {
        let w = WeightVector::uniform(a.len()).unwrap();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!((owa(&w, &a).unwrap() - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
    }

    #[test]
    fn owa_ignores_argument_order((w, _, a) in sized(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = a.clone();
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        prop_assert_eq!(owa(&w, &shuffled).unwrap(), owa(&w, &a).unwrap());
    }

    #[test]
    fn owawa_interpolates((w, v, a) in sized(), beta in 0.0f64..=1.0) {
        let lhs = owawa(&w, &v, &a, beta).unwrap();
        let rhs = beta * owa(&w, &a).unwrap() + (1.0 - beta) * wa(&v, &a).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn self_induced_iowa_is_owa((w, _, a) in sized()) {
        prop_assert_eq!(iowa(&w, &a, &a).unwrap(), owa(&w, &a).unwrap());
    }

    #[test]
    fn descending_order_sorts(a in (1usize..20).prop_flat_map(values)) {
        let order = descending_order(&a);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..a.len()).collect::<Vec<_>>());
        prop_assert!(order.windows(2).all(|p| a[p[0]] >= a[p[1]]));
    }
}

#[test]
fn basic_alpha_one_is_uniform_for_any_length() {
    let spec = QuantifierSpec::new(QuantifierFamily::Basic, 1.0).unwrap();
    for len in 1..30 {
        for w in owa_weights(&spec, len).unwrap().as_slice() {
            assert!((w - 1.0 / len as f64).abs() < 1e-12);
        }
    }
}
