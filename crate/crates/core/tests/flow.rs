use rand::Rng;
use taco_core::flow_sampler::{self, BridgeConfig, LiftedState, ParticleSlots};
use taco_core::marginal_path::{PairedEnds, Pairing, PathSpec};
use taco_core::measures::{Coupling, Points};
use taco_core::rng::rng;
use taco_core::tilting::{self, TiltRates};

fn pairs_2d<R: Rng>(r: &mut R, n: usize) -> Coupling {
    let xs = Points::new(2, (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let ys = Points::new(2, (0..2 * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let w: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    Coupling::pairs(xs, ys, &w).unwrap()
}

/// Direct evaluation of the posterior-weighted conditional velocity.
fn brute_beta(c: &Coupling, s: f64, z: &LiftedState, sigma: f64) -> Vec<f64> {
    let var = sigma * sigma * s * (1.0 - s);
    let mut num = [0.0; 2];
    let mut den = 0.0;
    for k in 0..c.len() {
        let (x, y) = (c.x_support().row(k), c.y_support().row(k));
        let (m, _) = flow_sampler::bridge_moments(x, y, s, sigma);
        let r2: f64 = (0..2).map(|a| (z.z1[a] - m[a]).powi(2) + (z.z2[a] - x[a]).powi(2)).sum();
        let w = c.weights()[k] * (-r2 / (2.0 * var)).exp();
        let v = flow_sampler::conditional_velocity(x, y, s, &z.z1);
        den += w;
        (0..2).for_each(|a| num[a] += w * v[a]);
    }
    num.iter().map(|v| v / den).collect()
}

#[test]
fn beta_field_matches_brute_force() {
    let mut r = rng(1, 0);
    let c = pairs_2d(&mut r, 5);
    let cfg = BridgeConfig { sigma: 0.8, ..Default::default() };
    for s in [0.1, 0.37, 0.5, 0.9] {
        let z = LiftedState { z1: vec![0.2, -0.1], z2: vec![0.1, 0.3] };
        let got = flow_sampler::beta_field(&c, s, &z, &cfg).unwrap();
        let want = brute_beta(&c, s, &z, cfg.sigma);
        for (p, q) in got.iter().zip(&want) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
    }
}

#[test]
fn mirrored_pairs_cancel_at_the_centre() {
    let xs = Points::new(2, vec![1.0, 0.5, -1.0, -0.5]).unwrap();
    let ys = Points::new(2, vec![2.0, -1.0, -2.0, 1.0]).unwrap();
    let c = Coupling::uniform_pairs(xs, ys).unwrap();
    let z = LiftedState { z1: vec![0.0, 0.0], z2: vec![0.0, 0.0] };
    let b = flow_sampler::beta_field(&c, 0.4, &z, &BridgeConfig::default()).unwrap();
    assert!(b.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn single_pair_is_transported_exactly() {
    let c = Coupling::uniform_pairs(Points::new(2, vec![0.3, -0.2]).unwrap(), Points::new(2, vec![1.5, 0.7]).unwrap()).unwrap();
    let cfg = BridgeConfig { sigma: 0.2, euler_steps: 40, ..Default::default() };
    let out = flow_sampler::integrate(&c, &Points::new(2, vec![0.3, -0.2]).unwrap(), &cfg).unwrap();
    assert!((out.row(0)[0] - 1.5).abs() < 1e-12);
    assert!((out.row(0)[1] - 0.7).abs() < 1e-12);
}

#[test]
fn identity_coupling_fixes_separated_points() {
    let pts = Points::new(1, vec![-3.0, 0.0, 3.0]).unwrap();
    let c = Coupling::uniform_pairs(pts.clone(), pts.clone()).unwrap();
    let cfg = BridgeConfig { sigma: 0.1, euler_steps: 50, ..Default::default() };
    let out = flow_sampler::integrate(&c, &pts, &cfg).unwrap();
    for (p, q) in out.as_slice().iter().zip(pts.as_slice()) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn covariance_rate_is_the_derivative_of_beta_under_tilting() {
    let mut r = rng(2, 0);
    let cfg = BridgeConfig { sigma: 0.7, ..Default::default() };
    for fixture in 0..3 {
        let c = pairs_2d(&mut r, 6 + fixture);
        let n = c.len();
        let rates =
            TiltRates { a: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(), b: (0..n).map(|_| r.random_range(-1.0..1.0)).collect() };
        let z = LiftedState { z1: vec![0.1, 0.0], z2: vec![-0.2, 0.2] };
        let s = 0.3;
        let cov = flow_sampler::covariance_rate(&c, &rates, s, &z, &cfg).unwrap();
        for h in [1e-3, 5e-4] {
            let up = flow_sampler::beta_field(&tilting::tilt_step(&c, &rates, h).unwrap(), s, &z, &cfg).unwrap();
            let dn = flow_sampler::beta_field(&tilting::tilt_step(&c, &rates, -h).unwrap(), s, &z, &cfg).unwrap();
            for a in 0..2 {
                let fd = (up[a] - dn[a]) / (2.0 * h);
                assert!((fd - cov[a]).abs() <= 0.02 * cov[a].abs() + 1e-8, "fixture {fixture}: {fd} vs {}", cov[a]);
            }
        }
    }
}

fn linear_path(n: usize) -> PathSpec {
    let start = Points::new(1, (0..n).map(|i| i as f64).collect()).unwrap();
    let end = Points::new(1, (0..n).map(|i| i as f64 + 1.0).collect()).unwrap();
    let ends = PairedEnds::new(start, &end, Pairing::GreedyNearest).unwrap();
    PathSpec::LinearPairs { mu: ends.clone(), nu: ends }
}

#[test]
fn weighted_update_without_slots_is_a_tilt_step() {
    let mut r = rng(3, 0);
    let n = 4;
    let xs = Points::new(1, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let ys = Points::new(1, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let c = Coupling::uniform_pairs(xs, ys).unwrap();
    let rates = TiltRates { a: vec![0.1, -0.2, 0.3, 0.0], b: vec![0.5, 0.0, -0.1, 0.2] };
    let slots = ParticleSlots { flow_len: n, x: Points::empty(1), y: Points::empty(1), x_index: vec![], y_index: vec![] };
    let (next, _) = flow_sampler::weighted_update(&c, &rates, 0.05, 0.0, &slots, &linear_path(n), 0).unwrap();
    let want = tilting::tilt_step(&c, &rates, 0.05).unwrap();
    for (p, q) in next.weights().iter().zip(want.weights()) {
        assert!((p - q).abs() < 1e-14);
    }
}

#[test]
fn slots_move_along_the_path_and_keep_their_mass() {
    let mut r = rng(4, 0);
    let n = 10;
    let pts = Points::new(1, (0..n).map(|i| i as f64).collect()).unwrap();
    let c = Coupling::uniform_pairs(pts.clone(), pts).unwrap();
    let (mix, slots) = flow_sampler::init_mixture(&c, 0.3, &mut r).unwrap();
    assert_eq!(slots.len(), 3);
    let rates = TiltRates::zeros(&mix);
    let (next, moved) = flow_sampler::weighted_update(&mix, &rates, 0.25, 0.3, &slots, &linear_path(n), 0).unwrap();
    for s in 0..3 {
        assert!((moved.x.row(s)[0] - slots.x.row(s)[0] - 0.25).abs() < 1e-14);
        assert!((moved.y.row(s)[0] - slots.y.row(s)[0] - 0.25).abs() < 1e-14);
    }
    let slot_mass: f64 = next.weights()[slots.flow_len..].iter().sum();
    assert!((slot_mass - 0.3).abs() < 1e-12);
}
