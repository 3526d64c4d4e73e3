use proptest::prelude::*;
use taco_core::marginal_path::Side;
use taco_core::measures::{self, Coupling, DiscreteMeasure, Points};
use taco_core::metrics::{self, MetricConfig};
use taco_core::tilting::{self, TiltConfig, TiltRates};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

fn measure_pair() -> impl Strategy<Value = (DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)> {
    (2usize..8).prop_flat_map(|n| (weights(n), weights(n), weights(n))).prop_map(|(a, b, c)| {
        let pts = Points::new(1, (0..a.len()).map(|i| i as f64).collect()).unwrap();
        let m = |w: &[f64]| DiscreteMeasure::particles(pts.clone(), w).unwrap();
        (m(&a), m(&b), m(&c))
    })
}

fn cloud(max: usize) -> impl Strategy<Value = Points> {
    (2usize..max).prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, 2 * n)).prop_map(|v| Points::new(2, v).unwrap())
}

fn table() -> impl Strategy<Value = Coupling> {
    (2usize..5, 2usize..5).prop_flat_map(|(n, m)| (Just((n, m)), prop::collection::vec(-3.0f64..3.0, n * m))).prop_map(|((n, m), lw)| {
        let line = |k: usize| DiscreteMeasure::uniform(Points::new(1, (0..k).map(|i| i as f64).collect()).unwrap()).unwrap();
        Coupling::table(&line(n), &line(m), lw).unwrap()
    })
}

fn metric_cfg() -> MetricConfig {
    MetricConfig { n_projections: 32, ..Default::default() }
}

proptest! {
    #[test]
    fn normalisation_is_idempotent(w in weights(6)) {
        let once = measures::normalize(&w).unwrap();
        let twice = measures::normalize(&once).unwrap();
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tv_is_a_metric((p, q, r) in measure_pair()) {
        let d = |a: &DiscreteMeasure, b: &DiscreteMeasure| measures::tv_distance(a, b).unwrap();
        prop_assert!(d(&p, &p).abs() < 1e-15);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-15);
        prop_assert!(d(&p, &q) <= 1.0 + 1e-12);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }

    #[test]
    fn ess_lies_between_one_and_n(w in (1usize..20).prop_flat_map(weights)) {
        let e = measures::ess(&w).unwrap();
        prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn conditional_expectation_stays_in_range(c in table(), seed in 0u64..1000) {
        let f: Vec<f64> = (0..c.n_y()).map(|j| ((j as u64 * 7919 + seed) % 97) as f64 / 10.0).collect();
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        for v in tilting::cond_expect(&c, &f, Side::Mu, &TiltConfig::default()).unwrap() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn tilt_step_stays_normalised(c in table(), delta in -1.0f64..1.0) {
        let rates = TiltRates {
            a: (0..c.n_x()).map(|i| i as f64 - 1.0).collect(),
            b: (0..c.n_y()).map(|j| 0.5 * j as f64).collect(),
        };
        let next = tilting::tilt_step(&c, &rates, delta).unwrap();
        prop_assert!((next.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_distances_are_symmetric_and_nonnegative(p in cloud(12), q in cloud(12)) {
        let cfg = metric_cfg();
        let sw1 = metrics::sliced_wasserstein(&p, &q, 1.0, &cfg).unwrap();
        let sw2 = metrics::sliced_wasserstein(&p, &q, 2.0, &cfg).unwrap();
        prop_assert!(sw1 >= 0.0 && sw1 <= sw2 + 1e-12);
        prop_assert!((sw2 - metrics::sliced_wasserstein(&q, &p, 2.0, &cfg).unwrap()).abs() < 1e-12);
        let e = metrics::energy_distance(&p, &q).unwrap();
        prop_assert!(e >= -1e-12);
        prop_assert!((e - metrics::energy_distance(&q, &p).unwrap()).abs() < 1e-12);
        let biased = MetricConfig { mmd_estimator: metrics::MmdEstimator::Biased, ..cfg };
        let m = metrics::mmd_rbf(&p, &q, &biased).unwrap();
        prop_assert!(m >= -1e-12);
        prop_assert!((m - metrics::mmd_rbf(&q, &p, &biased).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn distances_vanish_on_identical_samples(p in cloud(10)) {
        let cfg = MetricConfig { mmd_estimator: metrics::MmdEstimator::Biased, ..metric_cfg() };
        prop_assert!(metrics::sliced_wasserstein(&p, &p, 2.0, &cfg).unwrap() < 1e-12);
        prop_assert!(metrics::energy_distance(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!(metrics::mmd_rbf(&p, &p, &cfg).unwrap().abs() < 1e-12);
    }
}
