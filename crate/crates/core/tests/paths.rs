use taco_core::marginal_path::{self, GaussianEnds, PairedEnds, Pairing, PathSpec, Side};
use taco_core::measures::{GridSpec, Points};

fn gaussian_path() -> PathSpec {
    let grid = GridSpec::new(vec![[-6.0, 8.0]], 400).unwrap();
    let mu = GaussianEnds { mean0: vec![0.0], cov0: vec![1.0], mean1: vec![2.0], cov1: vec![0.25] };
    let nu = GaussianEnds { mean0: vec![1.0], cov0: vec![0.5], mean1: vec![-1.0], cov1: vec![2.0] };
    PathSpec::GaussianAnalytic { mu, nu, grid }
}

#[test]
fn linear_pairs_interpolate_between_their_ends() {
    let start = Points::new(2, vec![0.0, 0.0, 4.0, 4.0]).unwrap();
    let end = Points::new(2, vec![4.2, 4.0, 0.1, 0.2]).unwrap();
    let ends = PairedEnds::new(start.clone(), &end, Pairing::GreedyNearest).unwrap();
    let path = PathSpec::LinearPairs { mu: ends.clone(), nu: ends.clone() };
    let at0 = marginal_path::interpolate(&path, Side::Mu, 0.0).unwrap();
    let at1 = marginal_path::interpolate(&path, Side::Mu, 1.0).unwrap();
    assert_eq!(at0.points(), &start);
    assert_eq!(at1.points(), &ends.end);
    let mid = marginal_path::interpolate(&path, Side::Mu, 0.25).unwrap();
    for i in 0..2 {
        for k in 0..2 {
            let want = 0.75 * start.row(i)[k] + 0.25 * ends.end.row(i)[k];
            assert!((mid.points().row(i)[k] - want).abs() < 1e-15);
        }
        let v = marginal_path::particle_velocity(&path, Side::Mu, i).unwrap();
        assert_eq!(v, vec![ends.end.row(i)[0] - start.row(i)[0], ends.end.row(i)[1] - start.row(i)[1]]);
    }
}

#[test]
fn gaussian_endpoints_are_exact() {
    let path = gaussian_path();
    let grid = path.grid().unwrap().clone();
    let m0 = marginal_path::interpolate(&path, Side::Mu, 0.0).unwrap();
    let m1 = marginal_path::interpolate(&path, Side::Mu, 1.0).unwrap();
    assert!((m0.mean()[0] - 0.0).abs() < 1e-6);
    assert!((m1.mean()[0] - 2.0).abs() < 1e-6);
    assert_eq!(m0.grid(), Some(&grid));
}

#[test]
fn forcing_integrates_to_zero_and_agrees_with_the_grid_rate() {
    let path = gaussian_path();
    for side in [Side::Mu, Side::Nu] {
        for t in [0.2, 0.5, 0.8] {
            let m = marginal_path::interpolate(&path, side, t).unwrap();
            let zeta: Vec<f64> = m.points().iter().map(|x| marginal_path::forcing(&path, side, t, x).unwrap()).collect();
            let mean: f64 = zeta.iter().zip(m.weights()).map(|(z, w)| z * w).sum();
            // midpoint quadrature of the pointwise rate
            assert!(mean.abs() < 1e-3, "mean forcing {mean}");
            let grid_rate = marginal_path::grid_forcing(&path, side, t).unwrap();
            let gmean: f64 = grid_rate.iter().zip(m.weights()).map(|(z, w)| z * w).sum();
            assert!(gmean.abs() < 1e-6);
            for ((z, g), w) in zeta.iter().zip(&grid_rate).zip(m.weights()) {
                if *w > 1e-6 {
                    assert!((z - mean - g).abs() < 1e-4 * (1.0 + z.abs()), "{z} vs {g}");
                }
            }
        }
    }
}

#[test]
fn static_and_translating_gaussians() {
    let grid = GridSpec::new(vec![[-5.0, 5.0]], 50).unwrap();
    let still = GaussianEnds { mean0: vec![0.5], cov0: vec![1.0], mean1: vec![0.5], cov1: vec![1.0] };
    let shift = GaussianEnds { mean0: vec![0.0], cov0: vec![1.0], mean1: vec![1.5], cov1: vec![1.0] };
    let path = PathSpec::GaussianAnalytic { mu: still, nu: shift, grid };
    for x in [-2.0, 0.0, 1.3] {
        assert!(marginal_path::velocity(&path, Side::Mu, 0.4, &[x]).unwrap()[0].abs() < 1e-14);
        assert!(marginal_path::forcing(&path, Side::Mu, 0.4, &[x]).unwrap().abs() < 1e-14);
        assert!((marginal_path::velocity(&path, Side::Nu, 0.4, &[x]).unwrap()[0] - 1.5).abs() < 1e-14);
        // a pure translation at unit variance: zeta = 1.5 (x - m_t)
        let want = 1.5 * (x - 0.6);
        assert!((marginal_path::forcing(&path, Side::Nu, 0.4, &[x]).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn pairings_are_bijections() {
    let start = Points::new(1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
    let end = Points::new(1, vec![4.1, 0.2, 3.1, 1.1, 2.2]).unwrap();
    for method in [Pairing::GreedyNearest, Pairing::GreedyStandardized, Pairing::Sinkhorn] {
        let mut perm = marginal_path::pair_points(&start, &end, method).unwrap();
        perm.sort_unstable();
        assert_eq!(perm, vec![0, 1, 2, 3, 4]);
    }
    assert_eq!(marginal_path::pair_points(&start, &end, Pairing::GreedyNearest).unwrap(), vec![1, 3, 4, 2, 0]);
}
