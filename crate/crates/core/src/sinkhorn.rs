//! Log-domain Sinkhorn for entropic optimal transport.
//!
//! Plans are parametrised as
//! `log pi(i, j) = log a_i + log b_j + (f_i + g_j - C_ij) / eps`,
//! with the gauge fixed by `<g, nu> = 0`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math::{logsumexp, LOG_UNDERFLOW};
use crate::measures::{Coupling, DiscreteMeasure, Points};

#[derive(Clone, Debug, PartialEq)]
pub enum CostSpec {
    SquaredEuclidean,
    /// Euclidean distance `|x - y|`.
    Absolute,
    /// Explicit `n_x * n_y` matrix, row-major.
    Matrix(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SinkhornConfig {
    pub epsilon: f64,
    /// Stop once the L1 error of the row marginal drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, tol: 1e-10, max_iter: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub plan: Coupling,
    pub potentials: DualPotentials,
    pub iterations: usize,
    /// L1 error of the returned plan's marginals.
    pub marginal_error: f64,
}

pub fn cost_matrix(xs: &Points, ys: &Points, cost: &CostSpec) -> Result<Vec<f64>> {
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch { expected: xs.dim(), found: ys.dim() });
    }
    match cost {
        CostSpec::Matrix(m) => {
            if m.len() != xs.len() * ys.len() {
                return Err(Error::ShapeMismatch("cost matrix does not match the supports".into()));
            }
            Ok(m.clone())
        }
        CostSpec::SquaredEuclidean | CostSpec::Absolute => {
            let mut c = Vec::with_capacity(xs.len() * ys.len());
            for x in xs.iter() {
                for y in ys.iter() {
                    let d2 = crate::math::sq_dist(x, y);
                    c.push(if *cost == CostSpec::Absolute { d2.sqrt() } else { d2 });
                }
            }
            Ok(c)
        }
    }
}

pub fn solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostSpec, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    let c = cost_matrix(mu.points(), nu.points(), cost)?;
    solve_matrix(mu, nu, &c, cfg, None)
}

/// Sinkhorn on a precomputed cost matrix, optionally warm-started.
pub fn solve_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &[f64],
    cfg: &SinkhornConfig,
    warm: Option<&DualPotentials>,
) -> Result<SinkhornSolution> {
    let (n, m) = (mu.len(), nu.len());
    if c.len() != n * m {
        return Err(Error::ShapeMismatch("cost matrix does not match the supports".into()));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    let eps = cfg.epsilon;
    let la = mu.log_weights();
    let lb = nu.log_weights();
    let (mut f, mut g) = match warm {
        Some(p) if p.f.len() == n && p.g.len() == m => (p.f.clone(), p.g.clone()),
        _ => (vec![0.0; n], vec![0.0; m]),
    };
    let mut buf = vec![0.0; n.max(m)];
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    while iterations < cfg.max_iter {
        iterations += 1;
        // g-update makes the column marginal exact.
        for j in 0..m {
            for i in 0..n {
                buf[i] = la[i] + (f[i] - c[i * m + j]) / eps;
            }
            g[j] = -eps * logsumexp(&buf[..n]);
        }
        // The f-update's log-sum-exp also yields the current row masses.
        err = 0.0;
        for i in 0..n {
            let row = &c[i * m..(i + 1) * m];
            for j in 0..m {
                buf[j] = lb[j] + (g[j] - row[j]) / eps;
            }
            let s = logsumexp(&buf[..m]);
            if la[i] > f64::NEG_INFINITY {
                err += (f[i] / eps + s).exp_m1().abs() * la[i].exp();
            }
            f[i] = -eps * s;
        }
        if err <= cfg.tol {
            break;
        }
    }
    if !(err <= cfg.tol) {
        return Err(Error::NoConvergence { iterations, residual: err });
    }
    // Final g-update so the column marginal is exact for the returned f.
    for j in 0..m {
        for i in 0..n {
            buf[i] = la[i] + (f[i] - c[i * m + j]) / eps;
        }
        g[j] = -eps * logsumexp(&buf[..n]);
    }
    let shift: f64 = g.iter().zip(nu.weights()).map(|(x, w)| x * w).sum();
    g.iter_mut().for_each(|x| *x -= shift);
    f.iter_mut().for_each(|x| *x += shift);
    let lw: Vec<f64> = (0..n * m)
        .map(|k| {
            let (i, j) = (k / m, k % m);
            la[i] + lb[j] + (f[i] + g[j] - c[k]) / eps
        })
        .collect();
    let plan = Coupling::table(mu, nu, lw)?.with_epsilon_hint(Some(eps));
    let marginal_error = plan_marginal_error(&plan, mu, nu);
    Ok(SinkhornSolution { plan, potentials: DualPotentials { f, g, epsilon: eps }, iterations, marginal_error })
}

/// L1 marginal error of a table plan against target marginals.
pub fn plan_marginal_error(plan: &Coupling, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let (n, m) = (plan.n_x(), plan.n_y());
    let w = plan.weights();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            rows[i] += w[i * m + j];
            cols[j] += w[i * m + j];
        }
    }
    let e1: f64 = rows.iter().zip(mu.weights()).map(|(r, a)| (r - a).abs()).sum();
    let e2: f64 = cols.iter().zip(nu.weights()).map(|(r, b)| (r - b).abs()).sum();
    e1 + e2
}

/// Entropic OT value `<f, a> + <g, b>`, which at the optimum equals
/// `<C, pi> + eps KL(pi | a x b)`.
pub fn entropic_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostSpec, cfg: &SinkhornConfig) -> Result<f64> {
    let sol = solve(mu, nu, cost, cfg)?;
    let p = &sol.potentials;
    let fa: f64 = p.f.iter().zip(mu.weights()).map(|(f, a)| f * a).sum();
    let gb: f64 = p.g.iter().zip(nu.weights()).map(|(g, b)| g * b).sum();
    Ok(fa + gb)
}

/// Debiased Sinkhorn divergence with squared Euclidean cost.
///
/// Each of the three dual problems is solved by averaged symmetric updates
/// while epsilon is annealed geometrically (ratio 0.81) from the squared
/// diameter of the pooled support, one update per stage. At `cfg.epsilon`
/// the updates continue until no potential moves by more than
/// `cfg.tol * epsilon` or `cfg.max_iter` updates have run. Clustered clouds
/// at small epsilon converge too slowly for an exact solve, so the value is
/// the annealed approximation rather than an error.
pub fn sinkhorn_divergence(p: &DiscreteMeasure, q: &DiscreteMeasure, cfg: &SinkhornConfig) -> Result<f64> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    let cost = CostSpec::SquaredEuclidean;
    let cpq = cost_matrix(p.points(), q.points(), &cost)?;
    let cpp = cost_matrix(p.points(), p.points(), &cost)?;
    let cqq = cost_matrix(q.points(), q.points(), &cost)?;
    let diam = cpq.iter().chain(&cpp).chain(&cqq).fold(0.0f64, |m, v| m.max(*v));
    let pq = annealed_dual(p, q, &cpq, diam, cfg);
    let pp = annealed_dual(p, p, &cpp, diam, cfg);
    let qq = annealed_dual(q, q, &cqq, diam, cfg);
    Ok(pq - 0.5 * (pp + qq))
}

/// `out_i = -eps log sum_j exp(lb_j + (g_j - c_ij) / eps)` over a row-major `n x m` cost.
fn softmin(eps: f64, c: &[f64], m: usize, lb: &[f64], g: &[f64], out: &mut [f64], buf: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &c[i * m..(i + 1) * m];
        for j in 0..m {
            buf[j] = lb[j] + (g[j] - row[j]) / eps;
        }
        *o = -eps * logsumexp(&buf[..m]);
    }
}

fn annealed_dual(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: &[f64], diam: f64, cfg: &SinkhornConfig) -> f64 {
    let (n, m) = (mu.len(), nu.len());
    let ct: Vec<f64> = (0..m * n).map(|k| c[(k % n) * m + k / n]).collect();
    let (la, lb) = (mu.log_weights(), nu.log_weights());
    let mut buf = vec![0.0; n.max(m)];
    let mut eps = diam.max(cfg.epsilon);
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; m]);
    let (mut fn_, mut gn) = (vec![0.0; n], vec![0.0; m]);
    softmin(eps, c, m, lb, &g, &mut f, &mut buf);
    softmin(eps, &ct, n, la, &f, &mut g, &mut buf);
    let mut iterations = 0;
    loop {
        let last = eps <= cfg.epsilon;
        softmin(eps, c, m, lb, &g, &mut fn_, &mut buf);
        softmin(eps, &ct, n, la, &f, &mut gn, &mut buf);
        let mut moved = 0.0f64;
        for (x, y) in f.iter_mut().zip(&fn_).chain(g.iter_mut().zip(&gn)) {
            let next = 0.5 * (*x + y);
            moved = moved.max((next - *x).abs());
            *x = next;
        }
        if last {
            iterations += 1;
            if moved <= cfg.tol * eps || iterations >= cfg.max_iter {
                break;
            }
        }
        eps = (eps * 0.81).max(cfg.epsilon);
    }
    softmin(eps, c, m, lb, &g, &mut f, &mut buf);
    softmin(eps, &ct, n, la, &f, &mut g, &mut buf);
    let fa: f64 = f.iter().zip(mu.weights()).map(|(x, a)| x * a).sum();
    let gb: f64 = g.iter().zip(nu.weights()).map(|(x, b)| x * b).sum();
    fa + gb
}

/// Result of fitting `log(target / reference) = phi(x) + psi(y)`.
#[derive(Clone, Debug)]
pub struct TiltFit {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Max absolute residual of the fit in log space.
    pub residual: f64,
}

/// Measures how far `target` is from a two-sided exponential tilt of `reference`.
///
/// On a full table the least-squares fit is the two-way main-effects
/// decomposition, so it is computed in closed form. `psi` is centred under
/// the target's y-marginal and the constant is folded into `phi`.
pub fn tilt_residual(reference: &Coupling, target: &Coupling) -> Result<TiltFit> {
    if !reference.same_support(target) || reference.layout() != crate::measures::Layout::Table {
        return Err(Error::SupportMismatch);
    }
    let (n, m) = (reference.n_x(), reference.n_y());
    let lr = reference.log_weights();
    let lt = target.log_weights();
    if lr.iter().chain(lt).any(|w| *w < LOG_UNDERFLOW) {
        return Err(Error::ZeroEntries);
    }
    let r: Vec<f64> = lt.iter().zip(lr).map(|(t, q)| t - q).collect();
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            row[i] += r[i * m + j] / m as f64;
            col[j] += r[i * m + j] / n as f64;
        }
    }
    let grand: f64 = row.iter().sum::<f64>() / n as f64;
    let mut psi: Vec<f64> = col.iter().map(|c| c - grand).collect();
    let mut phi = row;
    let residual = (0..n * m).map(|k| (r[k] - phi[k / m] - psi[k % m]).abs()).fold(0.0, f64::max);
    let ty = target.y_log_marginal();
    let shift: f64 = psi.iter().zip(&ty).map(|(p, l)| p * l.exp()).sum();
    psi.iter_mut().for_each(|p| *p -= shift);
    phi.iter_mut().for_each(|p| *p += shift);
    Ok(TiltFit { phi, psi, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Points;

    fn pts(xs: &[f64]) -> Points {
        Points::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn identical_atoms_give_zero_divergence() {
        let p = DiscreteMeasure::particles(pts(&[0.0, 1.0, 3.0]), &[0.2, 0.3, 0.5]).unwrap();
        let cfg = SinkhornConfig { epsilon: 0.5, ..Default::default() };
        assert!(sinkhorn_divergence(&p, &p, &cfg).unwrap().abs() < 1e-6);
    }

    #[test]
    fn two_atoms_divergence_is_squared_distance() {
        let p = DiscreteMeasure::uniform(pts(&[0.0])).unwrap();
        let q = DiscreteMeasure::uniform(pts(&[1.5])).unwrap();
        let s = sinkhorn_divergence(&p, &q, &SinkhornConfig { epsilon: 0.01, ..Default::default() }).unwrap();
        assert!((s - 2.25).abs() < 1e-9);
    }

    #[test]
    fn independent_coupling_for_huge_epsilon() {
        let p = DiscreteMeasure::particles(pts(&[0.0, 1.0]), &[0.3, 0.7]).unwrap();
        let q = DiscreteMeasure::particles(pts(&[0.0, 2.0]), &[0.6, 0.4]).unwrap();
        let sol = solve(&p, &q, &CostSpec::SquaredEuclidean, &SinkhornConfig { epsilon: 1e9, ..Default::default() }).unwrap();
        let expect = [0.18, 0.12, 0.42, 0.28];
        for (w, e) in sol.plan.weights().iter().zip(expect) {
            assert!((w - e).abs() < 1e-8);
        }
    }

    #[test]
    fn gauge_is_nu_centred() {
        let p = DiscreteMeasure::particles(pts(&[0.0, 1.0, 2.0]), &[0.3, 0.3, 0.4]).unwrap();
        let q = DiscreteMeasure::particles(pts(&[0.5, 1.5]), &[0.5, 0.5]).unwrap();
        let sol = solve(&p, &q, &CostSpec::SquaredEuclidean, &SinkhornConfig { epsilon: 0.3, ..Default::default() }).unwrap();
        let mean: f64 = sol.potentials.g.iter().zip(q.weights()).map(|(g, w)| g * w).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn tilt_of_identical_plans_is_zero() {
        let p = DiscreteMeasure::particles(pts(&[0.0, 1.0]), &[0.4, 0.6]).unwrap();
        let c = Coupling::product(&p, &p).unwrap();
        let fit = tilt_residual(&c, &c).unwrap();
        assert!(fit.residual < 1e-14);
        assert!(fit.phi.iter().chain(&fit.psi).all(|v| v.abs() < 1e-14));
    }
}
