use rand::Rng;
use taco_core::marginal_path::Side;
use taco_core::measures::{Coupling, DiscreteMeasure, Points};
use taco_core::rng::rng;
use taco_core::tilting::{self, Conditionals, EnergyForcing, QuadratureNode, TiltConfig, TiltRates};

fn random_table<R: Rng>(r: &mut R, n: usize, m: usize) -> Coupling {
    let mu = DiscreteMeasure::uniform(Points::new(1, (0..n).map(|i| i as f64).collect()).unwrap()).unwrap();
    let nu = DiscreteMeasure::uniform(Points::new(1, (0..m).map(|j| j as f64).collect()).unwrap()).unwrap();
    let lw = (0..n * m).map(|_| r.random_range(-2.0..2.0)).collect();
    Coupling::table(&mu, &nu, lw).unwrap()
}

/// A forcing pair centred under the coupling's marginals.
fn centred_forcing<R: Rng>(r: &mut R, c: &Coupling) -> (Vec<f64>, Vec<f64>) {
    let mu: Vec<f64> = c.x_log_marginal().iter().map(|v| v.exp()).collect();
    let nu: Vec<f64> = c.y_log_marginal().iter().map(|v| v.exp()).collect();
    let mut z: Vec<f64> = (0..c.n_x()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut e: Vec<f64> = (0..c.n_y()).map(|_| r.random_range(-1.0..1.0)).collect();
    let mz: f64 = z.iter().zip(&mu).map(|(a, w)| a * w).sum();
    let me: f64 = e.iter().zip(&nu).map(|(a, w)| a * w).sum();
    z.iter_mut().for_each(|v| *v -= mz);
    e.iter_mut().for_each(|v| *v -= me);
    (z, e)
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            let pivot = a[k].clone();
            a[i].iter_mut().zip(&pivot).skip(k).for_each(|(v, p)| *v -= f * p);
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Dense oracle: eliminate `a`, pin the gauge with a rank-one term.
fn dense_rates(c: &Coupling, zeta: &[f64], eta: &[f64]) -> TiltRates {
    let ops = Conditionals::new(c, &TiltConfig::default()).unwrap();
    let m = c.n_y();
    let nu: Vec<f64> = c.y_log_marginal().iter().map(|v| v.exp()).collect();
    let unit = |len: usize, k: usize| (0..len).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let st_cols: Vec<Vec<f64>> = (0..m).map(|k| ops.s(&ops.t(&unit(m, k)))).collect();
    let mat = (0..m).map(|i| (0..m).map(|j| unit(m, j)[i] - st_cols[j][i] + nu[j]).collect()).collect();
    let sz = ops.s(zeta);
    let rhs = eta.iter().zip(&sz).map(|(e, s)| e - s).collect();
    let b = gauss_solve(mat, rhs);
    let tb = ops.t(&b);
    let a = zeta.iter().zip(&tb).map(|(z, t)| z - t).collect();
    TiltRates { a, b }
}

fn strong<'a>(z: &'a [f64], e: &'a [f64], mu: &'a [f64], nu: &'a [f64]) -> EnergyForcing<'a> {
    EnergyForcing::Strong { zeta: z, eta: e, mu, nu }
}

#[test]
fn gauss_seidel_matches_dense_solve() {
    let mut r = rng(1, 0);
    let cfg = TiltConfig { gs_tol: 1e-14, gs_max_sweeps: 10_000, ..Default::default() };
    for (n, m) in [(2, 2), (3, 4), (5, 5)] {
        let c = random_table(&mut r, n, m);
        let (z, e) = centred_forcing(&mut r, &c);
        let gs = tilting::solve_rates(&c, &z, &e, &cfg).unwrap();
        let dense = dense_rates(&c, &z, &e);
        for (p, q) in gs.rates.a.iter().chain(&gs.rates.b).zip(dense.a.iter().chain(&dense.b)) {
            assert!((p - q).abs() < 1e-10, "{p} vs {q}");
        }
    }
}

#[test]
fn zero_forcing_and_product_coupling() {
    let mut r = rng(2, 0);
    let c = random_table(&mut r, 4, 3);
    let sol = tilting::solve_rates(&c, &[0.0; 4], &[0.0; 3], &TiltConfig::default()).unwrap();
    assert!(sol.rates.a.iter().chain(&sol.rates.b).all(|v| v.abs() < 1e-12));

    let (mu, nu) = taco_core::measures::marginals(&c).unwrap();
    let prod = Coupling::product(&mu, &nu).unwrap();
    let (z, e) = centred_forcing(&mut r, &prod);
    let sol = tilting::solve_rates(&prod, &z, &e, &TiltConfig::default()).unwrap();
    for (p, q) in sol.rates.a.iter().zip(&z).chain(sol.rates.b.iter().zip(&e)) {
        assert!((p - q).abs() < 1e-10);
    }
}

#[test]
fn solution_minimises_the_energy() {
    let mut r = rng(3, 0);
    let c = random_table(&mut r, 4, 4);
    let (z, e) = centred_forcing(&mut r, &c);
    let mu: Vec<f64> = c.x_log_marginal().iter().map(|v| v.exp()).collect();
    let nu: Vec<f64> = c.y_log_marginal().iter().map(|v| v.exp()).collect();
    let f = strong(&z, &e, &mu, &nu);
    let sol = tilting::solve_rates(&c, &z, &e, &TiltConfig { gs_tol: 1e-13, ..Default::default() }).unwrap();
    let best = tilting::energy(&c, &sol.rates, &f).unwrap();

    let shifted = TiltRates { a: sol.rates.a.iter().map(|v| v + 0.7).collect(), b: sol.rates.b.iter().map(|v| v - 0.7).collect() };
    assert!((tilting::energy(&c, &shifted, &f).unwrap() - best).abs() < 1e-10);

    for _ in 0..50 {
        let mut p = sol.rates.clone();
        p.a.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
        p.b.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
        let shift: f64 = p.b.iter().zip(&nu).map(|(v, w)| v * w).sum();
        p.b.iter_mut().for_each(|v| *v -= shift);
        assert!(tilting::energy(&c, &p, &f).unwrap() > best);
    }
}

#[test]
fn conditional_operators_are_adjoint_averages() {
    let mut r = rng(4, 0);
    let c = random_table(&mut r, 5, 3);
    let ops = Conditionals::new(&c, &TiltConfig::default()).unwrap();
    let mu: Vec<f64> = c.x_log_marginal().iter().map(|v| v.exp()).collect();
    let nu: Vec<f64> = c.y_log_marginal().iter().map(|v| v.exp()).collect();
    let a: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let lhs: f64 = ops.t(&b).iter().zip(&a).zip(&mu).map(|((t, a), w)| t * a * w).sum();
    let rhs: f64 = ops.s(&a).iter().zip(&b).zip(&nu).map(|((s, b), w)| s * b * w).sum();
    assert!((lhs - rhs).abs() < 1e-10);
    assert!(ops.t(&[2.0; 3]).iter().all(|v| (v - 2.0).abs() < 1e-12));
    let ce = tilting::cond_expect(&c, &b, Side::Mu, &TiltConfig::default()).unwrap();
    assert_eq!(ce, ops.t(&b));
}

#[test]
fn doeblin_bounds_the_contraction() {
    let mut r = rng(5, 0);
    for _ in 0..200 {
        let (n, m) = (r.random_range(2..=6), r.random_range(2..=6));
        let c = random_table(&mut r, n, m);
        let alpha = tilting::doeblin_alpha(&c).unwrap();
        assert!(alpha > 0.0 && alpha <= 1.0);
        let ops = Conditionals::new(&c, &TiltConfig::default()).unwrap();
        let nu: Vec<f64> = c.y_log_marginal().iter().map(|v| v.exp()).collect();
        let mut b: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let shift: f64 = b.iter().zip(&nu).map(|(v, w)| v * w).sum();
        b.iter_mut().for_each(|v| *v -= shift);
        let nb = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let ntb = ops.t(&b).iter().fold(0.0f64, |s, v| s.max(v.abs()));
        assert!(ntb <= (1.0 - alpha) * nb + 1e-12);
    }
}

#[test]
fn near_deterministic_coupling_has_small_doeblin_constant() {
    let mu = DiscreteMeasure::uniform(Points::new(1, vec![0.0, 1.0, 2.0]).unwrap()).unwrap();
    let lw = (0..9).map(|k| if k / 3 == k % 3 { 0.0 } else { -12.0 }).collect();
    let c = Coupling::table(&mu, &mu, lw).unwrap();
    assert!(tilting::doeblin_alpha(&c).unwrap() < 1e-3);
}

#[test]
fn tilt_step_matches_marginal_rates_to_first_order() {
    let mut r = rng(6, 0);
    let c = random_table(&mut r, 4, 5);
    let (z, e) = centred_forcing(&mut r, &c);
    let sol = tilting::solve_rates(&c, &z, &e, &TiltConfig { gs_tol: 1e-13, ..Default::default() }).unwrap();
    let err = |delta: f64| {
        let next = tilting::tilt_step(&c, &sol.rates, delta).unwrap();
        let (nx, ny) = (next.x_log_marginal(), next.y_log_marginal());
        let (cx, cy) = (c.x_log_marginal(), c.y_log_marginal());
        let dx = nx.iter().zip(&cx).zip(&z).map(|((p, q), z)| ((p - q) / delta - z).abs());
        let dy = ny.iter().zip(&cy).zip(&e).map(|((p, q), e)| ((p - q) / delta - e).abs());
        dx.chain(dy).fold(0.0f64, f64::max)
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!(e1 < 0.1);
    assert!((e1 / e2 - 2.0).abs() < 0.1, "ratio {}", e1 / e2);
}

#[test]
fn midpoint_quadrature_is_exact_for_linear_rates() {
    let mut r = rng(7, 0);
    let c = random_table(&mut r, 3, 3);
    let a0 = vec![0.5, -1.0, 0.2];
    let b0 = vec![0.3, 0.1, -0.4];
    let delta = 0.3;
    let got = tilting::tilt_step_exact(
        &c,
        |t, _| Ok(TiltRates { a: a0.iter().map(|v| v * t).collect(), b: b0.iter().map(|v| v * t).collect() }),
        0.0,
        delta,
        3,
        QuadratureNode::Midpoint,
    )
    .unwrap();
    let want = tilting::tilt_step(&c, &TiltRates { a: a0, b: b0 }, delta * delta / 2.0).unwrap();
    for (p, q) in got.weights().iter().zip(want.weights()) {
        assert!((p - q).abs() < 1e-13);
    }
}
