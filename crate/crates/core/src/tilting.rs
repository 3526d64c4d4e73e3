//! Tilting rates and tilt steps.
//!
//! Along a path of entropic plans `pi_t` with marginals `(mu_t, nu_t)`, the
//! plan evolves by `d/dt log pi_t = a_t(x) + b_t(y)` (up to normalisation),
//! where the rates solve
//!
//! ```text
//! a + T b = zeta,    b + S a = eta,
//! ```
//!
//! with `T`, `S` the conditional-expectation operators of `pi_t` and
//! `zeta = d/dt log mu_t`, `eta = d/dt log nu_t`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg;
use crate::marginal_path::Side;
use crate::math::{logsumexp, norm_inf, LOG_UNDERFLOW};
use crate::measures::{Coupling, Layout, Points};

/// Largest admissible `|delta * F|` in a tilt step.
pub const EXPONENT_GUARD: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TiltRates {
    /// One value per x-support point (per pair for pair couplings).
    pub a: Vec<f64>,
    /// One value per y-support point, centred under the y-marginal.
    pub b: Vec<f64>,
}

impl TiltRates {
    pub fn zeros(c: &Coupling) -> Self {
        Self { a: vec![0.0; c.n_x()], b: vec![0.0; c.n_y()] }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TiltConfig {
    pub gs_max_sweeps: usize,
    pub gs_tol: f64,
    /// Kernel bandwidth for pair couplings; Silverman's rule when absent.
    pub kernel_bandwidth: Option<f64>,
    /// Relative ridge for the normal equations of the weak-form basis.
    pub ridge: f64,
    /// Polynomial degree of the weak-form rate basis.
    pub basis_degree: usize,
}

impl Default for TiltConfig {
    fn default() -> Self {
        Self { gs_max_sweeps: 500, gs_tol: 1e-8, kernel_bandwidth: None, ridge: 1e-10, basis_degree: 2 }
    }
}

/// Dense conditional operators of a coupling.
///
/// `tx[i * n_y + j] = pi(y_j | x_i)` and `sy[j * n_x + i] = pi(x_i | y_j)`.
/// For pair couplings the supports are the pair clouds and the conditionals
/// come from Nadaraya-Watson smoothing.
pub struct Conditionals {
    n_x: usize,
    n_y: usize,
    tx: Vec<f64>,
    sy: Vec<f64>,
    /// Marginal weights on the two supports.
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

fn silverman(points: &Points) -> f64 {
    let n = points.len() as f64;
    let d = points.dim() as f64;
    let m = points.mean();
    let var: f64 = points.iter().map(|p| crate::math::sq_dist(p, &m)).sum::<f64>() / (n * d);
    var.sqrt() * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0))
}

/// Row-normalised `exp(lw)` for each row of an `rows x cols` log table.
fn normalise_rows(lw: &mut [f64], cols: usize) -> Result<()> {
    for (i, row) in lw.chunks_exact_mut(cols).enumerate() {
        let z = logsumexp(row);
        if !z.is_finite() {
            return Err(Error::EmptyConditional { index: i });
        }
        row.iter_mut().for_each(|v| *v = (*v - z).exp());
    }
    Ok(())
}

impl Conditionals {
    pub fn new(c: &Coupling, cfg: &TiltConfig) -> Result<Self> {
        match c.layout() {
            Layout::Table => {
                let (n, m) = (c.n_x(), c.n_y());
                let lw = c.log_weights();
                let mut tx = lw.to_vec();
                normalise_rows(&mut tx, m)?;
                let mut sy = vec![0.0; n * m];
                for i in 0..n {
                    for j in 0..m {
                        sy[j * n + i] = lw[i * m + j];
                    }
                }
                normalise_rows(&mut sy, n)?;
                let mu = c.x_log_marginal().iter().map(|v| v.exp()).collect();
                let nu = c.y_log_marginal().iter().map(|v| v.exp()).collect();
                Ok(Self { n_x: n, n_y: m, tx, sy, mu, nu })
            }
            Layout::Pairs => {
                let n = c.len();
                let kernel = |pts: &Points| -> Result<Vec<f64>> {
                    let h = cfg.kernel_bandwidth.unwrap_or_else(|| silverman(pts)).max(1e-300);
                    let mut k = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            k[i * n + j] = c.log_weights()[j] - 0.5 * crate::math::sq_dist(pts.row(i), pts.row(j)) / (h * h);
                        }
                    }
                    normalise_rows(&mut k, n)?;
                    Ok(k)
                };
                let tx = kernel(c.x_support())?;
                let sy = kernel(c.y_support())?;
                let w = c.weights().to_vec();
                Ok(Self { n_x: n, n_y: n, tx, sy, mu: w.clone(), nu: w })
            }
        }
    }

    /// `(T b)(x_i) = E[b(Y) | X = x_i]`.
    pub fn t(&self, b: &[f64]) -> Vec<f64> {
        self.tx.chunks_exact(self.n_y).map(|row| crate::math::dot(row, b)).collect()
    }

    /// `(S a)(y_j) = E[a(X) | Y = y_j]`.
    pub fn s(&self, a: &[f64]) -> Vec<f64> {
        self.sy.chunks_exact(self.n_x).map(|row| crate::math::dot(row, a)).collect()
    }
}

/// Conditional expectation of `f` (given on the opposite support).
/// `Side::Mu` conditions on `X` (the operator `T`), `Side::Nu` on `Y` (`S`).
pub fn cond_expect(c: &Coupling, f: &[f64], side: Side, cfg: &TiltConfig) -> Result<Vec<f64>> {
    let ops = Conditionals::new(c, cfg)?;
    let expected = if side == Side::Mu { ops.n_y } else { ops.n_x };
    if f.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: f.len() });
    }
    Ok(match side {
        Side::Mu => ops.t(f),
        Side::Nu => ops.s(f),
    })
}

#[derive(Clone, Debug)]
pub struct RateSolution {
    pub rates: TiltRates,
    /// `|a + T b - zeta|_inf`.
    pub residual_x: f64,
    /// `|b + S a - eta|_inf`.
    pub residual_y: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Gauss-Seidel on the rate system; reports but does not fail on
/// non-convergence.
pub fn gauss_seidel(ops: &Conditionals, zeta: &[f64], eta: &[f64], cfg: &TiltConfig, warm: Option<&TiltRates>) -> Result<RateSolution> {
    if zeta.len() != ops.n_x {
        return Err(Error::DimensionMismatch { expected: ops.n_x, found: zeta.len() });
    }
    if eta.len() != ops.n_y {
        return Err(Error::DimensionMismatch { expected: ops.n_y, found: eta.len() });
    }
    let mut a = vec![0.0; ops.n_x];
    let mut b = match warm {
        Some(r) if r.b.len() == ops.n_y => r.b.clone(),
        _ => vec![0.0; ops.n_y],
    };
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.gs_max_sweeps {
        sweeps += 1;
        let tb = ops.t(&b);
        let new_a: Vec<f64> = zeta.iter().zip(&tb).map(|(z, v)| z - v).collect();
        let sa = ops.s(&new_a);
        let mut new_b: Vec<f64> = eta.iter().zip(&sa).map(|(e, v)| e - v).collect();
        let shift: f64 = new_b.iter().zip(&ops.nu).map(|(v, w)| v * w).sum();
        new_b.iter_mut().for_each(|v| *v -= shift);
        let change = a.iter().zip(&new_a).chain(b.iter().zip(&new_b)).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        a = new_a;
        b = new_b;
        if change < cfg.gs_tol {
            converged = true;
            break;
        }
    }
    let tb = ops.t(&b);
    let sa = ops.s(&a);
    let residual_x = a.iter().zip(&tb).zip(zeta).fold(0.0f64, |m, ((p, q), z)| m.max((p + q - z).abs()));
    let residual_y = b.iter().zip(&sa).zip(eta).fold(0.0f64, |m, ((p, q), e)| m.max((p + q - e).abs()));
    Ok(RateSolution { rates: TiltRates { a, b }, residual_x, residual_y, sweeps, converged })
}

/// Solves the rate system; `NoConvergence` if the sweeps run out.
pub fn solve_rates(c: &Coupling, zeta: &[f64], eta: &[f64], cfg: &TiltConfig) -> Result<RateSolution> {
    let ops = Conditionals::new(c, cfg)?;
    let sol = gauss_seidel(&ops, zeta, eta, cfg, None)?;
    if !sol.converged {
        return Err(Error::NoConvergence { iterations: sol.sweeps, residual: sol.residual_x.max(sol.residual_y) });
    }
    Ok(sol)
}

/// The forcing side of the energy functional.
pub enum EnergyForcing<'a> {
    /// `-2 E_mu[a zeta] - 2 E_nu[b eta]`, the strong form after integrating by parts.
    Strong { zeta: &'a [f64], eta: &'a [f64], mu: &'a [f64], nu: &'a [f64] },
    /// `-2 E_mu[grad a . u] - 2 E_nu[grad b . v]` with centred differences on the coupling's grids.
    GridWeak { mu: &'a [f64], nu: &'a [f64], u: &'a Points, v: &'a Points },
}

/// `E_pi[(a+b)^2]` minus the forcing terms.
pub fn energy(c: &Coupling, rates: &TiltRates, forcing: &EnergyForcing) -> Result<f64> {
    if rates.a.len() != c.n_x() || rates.b.len() != c.n_y() {
        return Err(Error::ShapeMismatch("rates do not match the coupling support".into()));
    }
    let quad: f64 = c
        .weights()
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let (i, j) = c.entry(k);
            let f = rates.a[i] + rates.b[j];
            w * f * f
        })
        .sum();
    let lin = match forcing {
        EnergyForcing::Strong { zeta, eta, mu, nu } => {
            let ea: f64 = rates.a.iter().zip(*zeta).zip(*mu).map(|((a, z), w)| a * z * w).sum();
            let eb: f64 = rates.b.iter().zip(*eta).zip(*nu).map(|((b, e), w)| b * e * w).sum();
            ea + eb
        }
        EnergyForcing::GridWeak { mu, nu, u, v } => {
            let gx = c.x_grid().ok_or(Error::OutOfFamily("weak-form energy without a grid"))?;
            let gy = c.y_grid().ok_or(Error::OutOfFamily("weak-form energy without a grid"))?;
            let ga = grid_gradient(&rates.a, gx);
            let gb = grid_gradient(&rates.b, gy);
            let ea: f64 = ga.iter().zip(u.iter()).zip(*mu).map(|((g, u), w)| w * crate::math::dot(g, u)).sum();
            let eb: f64 = gb.iter().zip(v.iter()).zip(*nu).map(|((g, v), w)| w * crate::math::dot(g, v)).sum();
            ea + eb
        }
    };
    Ok(quad - 2.0 * lin)
}

/// Centred differences (one-sided on the boundary) of cell values.
pub fn grid_gradient(f: &[f64], grid: &crate::measures::GridSpec) -> Vec<Vec<f64>> {
    let d = grid.dim();
    let r = grid.resolution;
    let mut out = vec![vec![0.0; d]; f.len()];
    for (cell, g) in out.iter_mut().enumerate() {
        let mut stride = 1;
        for axis in (0..d).rev() {
            let k = (cell / stride) % r;
            let h = grid.width(axis);
            g[axis] = if r == 1 {
                0.0
            } else if k == 0 {
                (f[cell + stride] - f[cell]) / h
            } else if k == r - 1 {
                (f[cell] - f[cell - stride]) / h
            } else {
                (f[cell + stride] - f[cell - stride]) / (2.0 * h)
            };
            stride *= r;
        }
    }
    out
}

/// Frozen tilt `pi <- pi exp(delta (a + b))`, renormalised.
pub fn tilt_step(c: &Coupling, rates: &TiltRates, delta: f64) -> Result<Coupling> {
    if rates.a.len() != c.n_x() || rates.b.len() != c.n_y() {
        return Err(Error::ShapeMismatch("rates do not match the coupling support".into()));
    }
    let mut lw = c.log_weights().to_vec();
    for (k, w) in lw.iter_mut().enumerate() {
        let (i, j) = c.entry(k);
        let e = delta * (rates.a[i] + rates.b[j]);
        if !(e.abs() <= EXPONENT_GUARD) {
            return Err(Error::NumericalOverflow { value: e });
        }
        *w += e;
    }
    c.with_log_weights(lw)
}

/// Applies an accumulated exponent `G(x, y) = ga(x) + gb(y)` directly.
fn tilt_by(c: &Coupling, ga: &[f64], gb: &[f64]) -> Result<Coupling> {
    tilt_step(c, &TiltRates { a: ga.to_vec(), b: gb.to_vec() }, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureNode {
    Left,
    Midpoint,
}

/// "Exact" update `pi_{t+delta} = pi_t exp(int_t^{t+delta} F_r dr)`.
///
/// The integral uses `substeps` equal cells with one node each. At a
/// midpoint node the coupling there is itself unknown, so the rates are
/// re-solved twice: once on a predictor from the previous node's rates, once
/// on the corrected coupling.
pub fn tilt_step_exact(
    c: &Coupling,
    mut rates_at: impl FnMut(f64, &Coupling) -> Result<TiltRates>,
    t: f64,
    delta: f64,
    substeps: usize,
    node: QuadratureNode,
) -> Result<Coupling> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    let h = delta / substeps as f64;
    let mut ga = vec![0.0; c.n_x()];
    let mut gb = vec![0.0; c.n_y()];
    let mut last: Option<TiltRates> = None;
    for k in 0..substeps {
        let left = t + k as f64 * h;
        let rates = match node {
            QuadratureNode::Left => {
                let here = tilt_by(c, &ga, &gb)?;
                rates_at(left, &here)?
            }
            QuadratureNode::Midpoint => {
                let r = left + 0.5 * h;
                let mut guess = match last.take() {
                    Some(g) => g,
                    None => rates_at(left, &tilt_by(c, &ga, &gb)?)?,
                };
                for _ in 0..2 {
                    let pa: Vec<f64> = ga.iter().zip(&guess.a).map(|(g, a)| g + 0.5 * h * a).collect();
                    let pb: Vec<f64> = gb.iter().zip(&guess.b).map(|(g, b)| g + 0.5 * h * b).collect();
                    guess = rates_at(r, &tilt_by(c, &pa, &pb)?)?;
                }
                guess
            }
        };
        ga.iter_mut().zip(&rates.a).for_each(|(g, a)| *g += h * a);
        gb.iter_mut().zip(&rates.b).for_each(|(g, b)| *g += h * b);
        last = Some(rates);
    }
    tilt_by(c, &ga, &gb)
}

/// Doeblin constant `min pi(x, y) / (mu(x) nu(y))` of a table coupling.
/// Both conditional ratios in the minorisation reduce to this one quantity.
pub fn doeblin_alpha(c: &Coupling) -> Result<f64> {
    if c.layout() != Layout::Table {
        return Err(Error::OutOfFamily("pair couplings (no table to minorise)"));
    }
    let lx = c.x_log_marginal();
    let ly = c.y_log_marginal();
    let m = c.n_y();
    let mut worst = f64::INFINITY;
    for (k, lw) in c.log_weights().iter().enumerate() {
        if *lw < LOG_UNDERFLOW {
            return Err(Error::ZeroEntries);
        }
        worst = worst.min(lw - lx[k / m] - ly[k % m]);
    }
    Ok(worst.exp().min(1.0))
}

/// Path samples and velocities at one time, for the weak-form solve.
pub struct WeakForcing<'a> {
    pub mu_points: &'a Points,
    pub mu_velocity: &'a Points,
    pub nu_points: &'a Points,
    pub nu_velocity: &'a Points,
}

/// Rates `a = theta . phi(x)`, `b = chi . phi(y)` over polynomial features of
/// standardised coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RateBasis {
    pub degree: usize,
    pub x_center: Vec<f64>,
    pub x_scale: f64,
    pub y_center: Vec<f64>,
    pub y_scale: f64,
    pub theta: Vec<f64>,
    /// Coefficients of the non-constant y-features; the constant sits in `offset`.
    pub chi: Vec<f64>,
    pub offset: f64,
}

fn n_features(d: usize, degree: usize) -> usize {
    match degree {
        0 => 1,
        1 => 1 + d,
        _ => 1 + d + d * (d + 1) / 2,
    }
}

/// Features and their gradients (w.r.t. the standardised coordinate).
fn features(z: &[f64], degree: usize, phi: &mut Vec<f64>, grad: &mut Vec<f64>) {
    let d = z.len();
    phi.clear();
    grad.clear();
    phi.push(1.0);
    grad.extend(core::iter::repeat_n(0.0, d));
    if degree >= 1 {
        for k in 0..d {
            phi.push(z[k]);
            grad.extend((0..d).map(|m| if m == k { 1.0 } else { 0.0 }));
        }
    }
    if degree >= 2 {
        for k in 0..d {
            for l in k..d {
                phi.push(z[k] * z[l]);
                grad.extend((0..d).map(|m| {
                    let mut g = 0.0;
                    if m == k {
                        g += z[l];
                    }
                    if m == l {
                        g += z[k];
                    }
                    g
                }));
            }
        }
    }
}

fn standardisation(a: &Points, b: &Points) -> (Vec<f64>, f64) {
    let mut all = a.clone();
    all.extend(b);
    let m = all.mean();
    let var: f64 = all.iter().map(|p| crate::math::sq_dist(p, &m)).sum::<f64>() / (all.len() * all.dim()).max(1) as f64;
    (m, if var > 0.0 { var.sqrt() } else { 1.0 })
}

impl RateBasis {
    fn eval(&self, coef: &[f64], center: &[f64], scale: f64, skip_const: bool, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(center).map(|(p, c)| (p - c) / scale).collect();
        let (mut phi, mut g) = (Vec::new(), Vec::new());
        features(&z, self.degree, &mut phi, &mut g);
        let phi = if skip_const { &phi[1..] } else { &phi[..] };
        crate::math::dot(coef, phi)
    }

    pub fn a(&self, x: &[f64]) -> f64 {
        self.eval(&self.theta, &self.x_center, self.x_scale, false, x)
    }

    pub fn b(&self, y: &[f64]) -> f64 {
        self.eval(&self.chi, &self.y_center, self.y_scale, true, y) + self.offset
    }
}

/// Weak-form rates for a pair coupling over a polynomial basis.
///
/// Minimises `E_pi[(a+b)^2] - 2 E_mu[grad a . u] - 2 E_nu[grad b . v]` with
/// `mu`, `nu` given by path samples. The quadratic is solved jointly (the
/// fixed point Gauss-Seidel would reach); `b` is then centred under the
/// coupling's y-marginal.
pub fn solve_rates_weak(c: &Coupling, forcing: &WeakForcing, cfg: &TiltConfig) -> Result<(RateSolution, RateBasis)> {
    if c.layout() != Layout::Pairs {
        return Err(Error::OutOfFamily("table couplings (use solve_rates)"));
    }
    let d = c.dim();
    let deg = cfg.basis_degree.min(2);
    let p = n_features(d, deg);
    let q = p - 1;
    let (xc, xs) = standardisation(c.x_support(), forcing.mu_points);
    let (yc, ys) = standardisation(c.y_support(), forcing.nu_points);
    let dim = p + q;
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let (mut phi, mut gphi) = (Vec::new(), Vec::new());
    let (mut psi, mut gpsi) = (Vec::new(), Vec::new());
    let mut joint = vec![0.0; dim];
    let zx = |x: &[f64]| -> Vec<f64> { x.iter().zip(&xc).map(|(v, m)| (v - m) / xs).collect() };
    let zy = |y: &[f64]| -> Vec<f64> { y.iter().zip(&yc).map(|(v, m)| (v - m) / ys).collect() };
    for (k, w) in c.weights().iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        features(&zx(c.x_support().row(k)), deg, &mut phi, &mut gphi);
        features(&zy(c.y_support().row(k)), deg, &mut psi, &mut gpsi);
        joint[..p].copy_from_slice(&phi);
        joint[p..].copy_from_slice(&psi[1..]);
        for r in 0..dim {
            let wr = w * joint[r];
            for s in 0..dim {
                gram[r * dim + s] += wr * joint[s];
            }
        }
    }
    let side = |pts: &Points, vel: &Points, z: &dyn Fn(&[f64]) -> Vec<f64>, scale: f64, out: &mut [f64], skip: usize| {
        let (mut f, mut g) = (Vec::new(), Vec::new());
        let n = pts.len().max(1) as f64;
        for (x, u) in pts.iter().zip(vel.iter()) {
            features(&z(x), deg, &mut f, &mut g);
            for (r, o) in out.iter_mut().enumerate() {
                let grad = &g[(r + skip) * d..(r + skip + 1) * d];
                *o += crate::math::dot(grad, u) / (scale * n);
            }
        }
    };
    side(forcing.mu_points, forcing.mu_velocity, &zx, xs, &mut rhs[..p], 0);
    side(forcing.nu_points, forcing.nu_velocity, &zy, ys, &mut rhs[p..], 1);
    let sol =
        linalg::solve_spd(&gram, &rhs, dim, cfg.ridge.max(1e-14)).ok_or(Error::NoConvergence { iterations: 1, residual: f64::NAN })?;
    let mut basis = RateBasis {
        degree: deg,
        x_center: xc,
        x_scale: xs,
        y_center: yc,
        y_scale: ys,
        theta: sol[..p].to_vec(),
        chi: sol[p..].to_vec(),
        offset: 0.0,
    };
    let mut a: Vec<f64> = c.x_support().iter().map(|x| basis.a(x)).collect();
    let mut b: Vec<f64> = c.y_support().iter().map(|y| basis.b(y)).collect();
    let shift: f64 = b.iter().zip(c.weights()).map(|(v, w)| v * w).sum();
    b.iter_mut().for_each(|v| *v -= shift);
    a.iter_mut().for_each(|v| *v += shift);
    basis.offset = -shift;
    basis.theta[0] += shift;
    let gram_res = {
        let gs = linalg::matvec(&gram, &sol, dim);
        gs.iter().zip(&rhs).fold(0.0f64, |m, (g, r)| m.max((g - r).abs()))
    };
    let rates = TiltRates { a, b };
    let finite = norm_inf(&rates.a).is_finite() && norm_inf(&rates.b).is_finite();
    Ok((RateSolution { rates, residual_x: gram_res, residual_y: gram_res, sweeps: 1, converged: finite }, basis))
}

/// Weak-form energy of basis rates against path samples.
pub fn basis_energy(c: &Coupling, basis: &RateBasis, forcing: &WeakForcing) -> f64 {
    let quad: f64 = (0..c.len())
        .map(|k| {
            let f = basis.a(c.x_support().row(k)) + basis.b(c.y_support().row(k));
            c.weights()[k] * f * f
        })
        .sum();
    let h = 1e-5;
    let directional = |f: &dyn Fn(&[f64]) -> f64, pts: &Points, vel: &Points| -> f64 {
        let n = pts.len().max(1) as f64;
        pts.iter()
            .zip(vel.iter())
            .map(|(x, u)| {
                let up: Vec<f64> = x.iter().zip(u).map(|(p, v)| p + h * v).collect();
                let dn: Vec<f64> = x.iter().zip(u).map(|(p, v)| p - h * v).collect();
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .sum::<f64>()
            / n
    };
    let ea = directional(&|x| basis.a(x), forcing.mu_points, forcing.mu_velocity);
    let eb = directional(&|y| basis.b(y), forcing.nu_points, forcing.nu_velocity);
    quad - 2.0 * (ea + eb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;

    fn two_by_two() -> Coupling {
        let m = DiscreteMeasure::uniform(Points::new(1, vec![0.0, 1.0]).unwrap()).unwrap();
        let lw = [0.1f64, 0.2, 0.3, 0.4].iter().map(|w| w.ln()).collect();
        Coupling::table(&m, &m, lw).unwrap()
    }

    #[test]
    fn t_operator_hand_example() {
        let tb = cond_expect(&two_by_two(), &[1.0, -1.0], Side::Mu, &TiltConfig::default()).unwrap();
        assert!((tb[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((tb[1] + 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn tilt_step_softmax() {
        let pts = Points::new(1, vec![0.0, 1.0]).unwrap();
        let c = Coupling::uniform_pairs(pts.clone(), pts).unwrap();
        let r = TiltRates { a: vec![1.0, -1.0], b: vec![0.0, 0.0] };
        let out = tilt_step(&c, &r, 0.1).unwrap();
        assert!((out.weights()[0] - 0.549834).abs() < 1e-6);
        assert!((out.weights()[1] - 0.450166).abs() < 1e-6);
    }

    #[test]
    fn overflow_guard() {
        let pts = Points::new(1, vec![0.0, 1.0]).unwrap();
        let c = Coupling::uniform_pairs(pts.clone(), pts).unwrap();
        let r = TiltRates { a: vec![1e5, 0.0], b: vec![0.0, 0.0] };
        assert!(matches!(tilt_step(&c, &r, 0.1), Err(Error::NumericalOverflow { .. })));
    }

    #[test]
    fn product_doeblin_is_one() {
        let m = DiscreteMeasure::particles(Points::new(1, vec![0.0, 1.0, 2.0]).unwrap(), &[0.2, 0.3, 0.5]).unwrap();
        let c = Coupling::product(&m, &m).unwrap();
        assert!((doeblin_alpha(&c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let g = crate::measures::GridSpec::new(alloc::vec![[0.0, 1.0]], 5).unwrap();
        let f: Vec<f64> = g.centers().iter().map(|x| 3.0 * x[0] - 1.0).collect();
        for gr in grid_gradient(&f, &g) {
            assert!((gr[0] - 3.0).abs() < 1e-12);
        }
    }
}
