use rand::Rng;
use taco_core::measures::{Coupling, DiscreteMeasure, Points};
use taco_core::rng::rng;
use taco_core::sinkhorn::{self, CostSpec, SinkhornConfig};

fn random_measure<R: Rng>(r: &mut R, n: usize) -> DiscreteMeasure {
    let pts: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    DiscreteMeasure::particles(Points::new(1, pts).unwrap(), &w).unwrap()
}

/// Plain iterative proportional fitting on `K = exp(-C / eps)`.
fn ipf(a: &[f64], b: &[f64], c: &[f64], eps: f64) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let mut p: Vec<f64> = c.iter().map(|v| (-v / eps).exp()).collect();
    for _ in 0..20_000 {
        for i in 0..n {
            let s: f64 = p[i * m..(i + 1) * m].iter().sum();
            p[i * m..(i + 1) * m].iter_mut().for_each(|v| *v *= a[i] / s);
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| p[i * m + j]).sum();
            (0..n).for_each(|i| p[i * m + j] *= b[j] / s);
        }
    }
    p
}

#[test]
fn matches_ipf_on_random_small_problems() {
    let mut r = rng(7, 0);
    for _ in 0..50 {
        let (n, m) = (r.random_range(1..=5), r.random_range(1..=5));
        let mu = random_measure(&mut r, n);
        let nu = random_measure(&mut r, m);
        let eps = r.random_range(0.1..1.0);
        let cfg = SinkhornConfig { epsilon: eps, tol: 1e-13, max_iter: 100_000 };
        let sol = sinkhorn::solve(&mu, &nu, &CostSpec::SquaredEuclidean, &cfg).unwrap();
        let c = sinkhorn::cost_matrix(mu.points(), nu.points(), &CostSpec::SquaredEuclidean).unwrap();
        let oracle = ipf(mu.weights(), nu.weights(), &c, eps);
        for (p, q) in sol.plan.weights().iter().zip(&oracle) {
            assert!((p - q).abs() < 1e-8, "{p} vs {q}");
        }
        // first-order conditions: log pi = (f + g - C) / eps up to the normalisation
        let (f, g) = (&sol.potentials.f, &sol.potentials.g);
        let lw = sol.plan.log_weights();
        let mut foc = 0.0f64;
        for i in 0..n {
            for j in 0..m {
                let pred = (f[i] + g[j] - c[i * m + j]) / eps + mu.log_weights()[i] + nu.log_weights()[j];
                foc = foc.max((lw[i * m + j] - pred).abs());
            }
        }
        assert!(foc < 1e-9, "foc residual {foc}");
    }
}

#[test]
fn constant_cost_gives_the_product() {
    let mut r = rng(3, 1);
    let mu = random_measure(&mut r, 4);
    let nu = random_measure(&mut r, 3);
    let cfg = SinkhornConfig { epsilon: 0.3, ..Default::default() };
    let sol = sinkhorn::solve(&mu, &nu, &CostSpec::Matrix(vec![2.5; 12]), &cfg).unwrap();
    let prod = Coupling::product(&mu, &nu).unwrap();
    for (p, q) in sol.plan.weights().iter().zip(prod.weights()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn tilt_residual_separates_costs() {
    let mut r = rng(11, 2);
    let cfg = SinkhornConfig { epsilon: 0.5, tol: 1e-13, max_iter: 100_000 };
    let (mu, nu) = (random_measure(&mut r, 5), random_measure(&mut r, 5));
    let mu2 = DiscreteMeasure::particles(mu.points().clone(), &[1.0, 2.0, 3.0, 1.0, 0.5]).unwrap();
    let nu2 = DiscreteMeasure::particles(nu.points().clone(), &[0.3, 1.0, 1.0, 2.0, 1.0]).unwrap();
    let a = sinkhorn::solve(&mu, &nu, &CostSpec::SquaredEuclidean, &cfg).unwrap();
    let b = sinkhorn::solve(&mu2, &nu2, &CostSpec::SquaredEuclidean, &cfg).unwrap();
    let same = sinkhorn::tilt_residual(&a.plan, &b.plan).unwrap();
    assert!(same.residual < 1e-6, "{}", same.residual);
    let c = sinkhorn::solve(&mu2, &nu2, &CostSpec::Absolute, &cfg).unwrap();
    let other = sinkhorn::tilt_residual(&a.plan, &c.plan).unwrap();
    assert!(other.residual > 1e-2, "{}", other.residual);
}

#[test]
fn divergence_matches_entropic_cost_composition() {
    let p = DiscreteMeasure::particles(Points::new(1, vec![0.0, 0.4, 1.0]).unwrap(), &[0.2, 0.5, 0.3]).unwrap();
    let q = DiscreteMeasure::particles(Points::new(1, vec![0.1, 0.7, 1.3]).unwrap(), &[0.4, 0.4, 0.2]).unwrap();
    let cfg = SinkhornConfig { epsilon: 0.2, tol: 1e-13, max_iter: 100_000 };
    let ot = |a: &DiscreteMeasure, b: &DiscreteMeasure| sinkhorn::entropic_cost(a, b, &CostSpec::SquaredEuclidean, &cfg).unwrap();
    let oracle = ot(&p, &q) - 0.5 * ot(&p, &p) - 0.5 * ot(&q, &q);
    let got = sinkhorn::sinkhorn_divergence(&p, &q, &cfg).unwrap();
    assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    assert!(got > 0.0);
    assert!(sinkhorn::sinkhorn_divergence(&p, &p, &cfg).unwrap().abs() < 1e-12);
}

#[test]
fn warm_start_reaches_the_same_plan() {
    let mut r = rng(5, 3);
    let (mu, nu) = (random_measure(&mut r, 5), random_measure(&mut r, 4));
    let cfg = SinkhornConfig { epsilon: 0.25, tol: 1e-12, max_iter: 100_000 };
    let c = sinkhorn::cost_matrix(mu.points(), nu.points(), &CostSpec::SquaredEuclidean).unwrap();
    let cold = sinkhorn::solve_matrix(&mu, &nu, &c, &cfg, None).unwrap();
    let warm = sinkhorn::solve_matrix(&mu, &nu, &c, &cfg, Some(&cold.potentials)).unwrap();
    assert!(warm.iterations <= 2);
    for (p, q) in cold.plan.weights().iter().zip(warm.plan.weights()) {
        assert!((p - q).abs() < 1e-10);
    }
}
