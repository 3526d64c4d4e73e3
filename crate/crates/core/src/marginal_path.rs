//! Marginal paths `t -> (mu_t, nu_t)` from the reference marginals to the new
//! ones, with their velocities and log-density rates `zeta = d/dt log mu_t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Component, Mixture};
use crate::linalg;
use crate::math::{log_normalize, sq_dist};
use crate::measures::{DiscreteMeasure, GridSpec, Points, Support};
use crate::sinkhorn::{self, CostSpec, SinkhornConfig};

/// Finite-difference step in `t` for grid forcing.
pub const FORCING_FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Mu,
    Nu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Pairing {
    /// Greedy nearest neighbour on raw coordinates.
    GreedyNearest,
    /// Greedy nearest neighbour after centring and scaling each cloud.
    GreedyStandardized,
    /// Rounding of an entropic plan between the two clouds.
    Sinkhorn,
}

/// Particle endpoints; `end` is already reordered to match `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedEnds {
    pub start: Points,
    pub end: Points,
}

impl PairedEnds {
    pub fn new(start: Points, end: &Points, pairing: Pairing) -> Result<Self> {
        let perm = pair_points(&start, end, pairing)?;
        Ok(Self { end: end.select(&perm), start })
    }

    pub fn position(&self, t: f64, i: usize, out: &mut [f64]) {
        let (a, b) = (self.start.row(i), self.end.row(i));
        for k in 0..out.len() {
            out[k] = (1.0 - t) * a[k] + t * b[k];
        }
    }
}

/// Gaussian endpoints with full covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEnds {
    pub mean0: Vec<f64>,
    pub cov0: Vec<f64>,
    pub mean1: Vec<f64>,
    pub cov1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureEnds {
    pub start: Mixture,
    pub end: Mixture,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathSpec {
    LinearPairs { mu: PairedEnds, nu: PairedEnds },
    GaussianAnalytic { mu: GaussianEnds, nu: GaussianEnds, grid: GridSpec },
    GridMixture { mu: MixtureEnds, nu: MixtureEnds, grid: GridSpec },
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

impl GaussianEnds {
    fn dim(&self) -> usize {
        self.mean0.len()
    }

    /// Mean, covariance square root `A_t` and its derivative at `t`.
    fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let a0 = linalg::sym_apply(&self.cov0, d, |v| v.max(0.0).sqrt());
        let a1 = linalg::sym_apply(&self.cov1, d, |v| v.max(0.0).sqrt());
        let at = lerp(&a0, &a1, t);
        let dot: Vec<f64> = a1.iter().zip(&a0).map(|(x, y)| x - y).collect();
        (lerp(&self.mean0, &self.mean1, t), at, dot)
    }

    fn log_density(&self, t: f64, x: &[f64]) -> f64 {
        let d = self.dim();
        let (m, a, _) = self.state(t);
        let cov = linalg::matmul(&a, &a, d);
        let prec = linalg::sym_apply(&cov, d, |v| 1.0 / v);
        let (vals, _) = linalg::sym_eigen(&cov, d);
        let diff: Vec<f64> = x.iter().zip(&m).map(|(p, q)| p - q).collect();
        let q = crate::math::dot(&diff, &linalg::matvec(&prec, &diff, d));
        -0.5 * q - 0.5 * vals.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * d as f64 * (2.0 * core::f64::consts::PI).ln()
    }

    /// Velocity `m' + A' A_t^{-1} (x - m_t)` of the linear square-root interpolation.
    fn velocity(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let (m, a, adot) = self.state(t);
        let ainv = linalg::sym_apply(&a, d, |v| 1.0 / v);
        let diff: Vec<f64> = x.iter().zip(&m).map(|(p, q)| p - q).collect();
        let lin = linalg::matvec(&linalg::matmul(&adot, &ainv, d), &diff, d);
        lin.iter().zip(self.mean1.iter().zip(&self.mean0)).map(|(l, (m1, m0))| l + m1 - m0).collect()
    }

    /// `-div u - u . grad log mu_t`, in closed form.
    fn forcing(&self, t: f64, x: &[f64]) -> f64 {
        let d = self.dim();
        let (m, a, adot) = self.state(t);
        let ainv = linalg::sym_apply(&a, d, |v| 1.0 / v);
        let jac = linalg::matmul(&adot, &ainv, d);
        let div: f64 = (0..d).map(|i| jac[i * d + i]).sum();
        let cov = linalg::matmul(&a, &a, d);
        let prec = linalg::sym_apply(&cov, d, |v| 1.0 / v);
        let diff: Vec<f64> = x.iter().zip(&m).map(|(p, q)| p - q).collect();
        let grad: Vec<f64> = linalg::matvec(&prec, &diff, d).iter().map(|v| -v).collect();
        let u = self.velocity(t, x);
        -div - crate::math::dot(&u, &grad)
    }
}

fn interp_mixture(ends: &MixtureEnds, t: f64) -> Result<Mixture> {
    if ends.start.components.len() != ends.end.components.len() {
        return Err(Error::ShapeMismatch("mixture endpoints need the same component count".into()));
    }
    Ok(Mixture::new(
        ends.start
            .components
            .iter()
            .zip(&ends.end.components)
            .map(|(a, b)| Component {
                weight: (1.0 - t) * a.weight + t * b.weight,
                mean: lerp(&a.mean, &b.mean, t),
                std: (1.0 - t) * a.std + t * b.std,
            })
            .collect(),
    ))
}

impl PathSpec {
    pub fn dim(&self) -> usize {
        match self {
            PathSpec::LinearPairs { mu, .. } => mu.start.dim(),
            PathSpec::GaussianAnalytic { grid, .. } | PathSpec::GridMixture { grid, .. } => grid.dim(),
        }
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match self {
            PathSpec::LinearPairs { .. } => None,
            PathSpec::GaussianAnalytic { grid, .. } | PathSpec::GridMixture { grid, .. } => Some(grid),
        }
    }

    pub fn pairs(&self, side: Side) -> Option<&PairedEnds> {
        match (self, side) {
            (PathSpec::LinearPairs { mu, .. }, Side::Mu) => Some(mu),
            (PathSpec::LinearPairs { nu, .. }, Side::Nu) => Some(nu),
            _ => None,
        }
    }

    fn log_density(&self, side: Side, t: f64, x: &[f64]) -> Result<f64> {
        match self {
            PathSpec::LinearPairs { .. } => Err(Error::OutOfFamily("particle paths (no density)")),
            PathSpec::GaussianAnalytic { mu, nu, .. } => Ok(pick(side, mu, nu).log_density(t, x)),
            PathSpec::GridMixture { mu, nu, .. } => Ok(interp_mixture(pick(side, mu, nu), t)?.log_density(x)),
        }
    }

    /// Log cell masses of the grid discretisation, normalised.
    pub fn grid_log_masses(&self, side: Side, t: f64) -> Result<Vec<f64>> {
        let grid = self.grid().ok_or(Error::OutOfFamily("particle paths (no grid)"))?;
        let centers = grid.centers();
        let mut lw = Vec::with_capacity(centers.len());
        match self {
            PathSpec::GridMixture { mu, nu, .. } => {
                let m = interp_mixture(pick(side, mu, nu), t)?;
                lw.extend(centers.iter().map(|x| m.log_density(x)));
            }
            _ => {
                for x in centers.iter() {
                    lw.push(self.log_density(side, t, x)?);
                }
            }
        }
        log_normalize(&mut lw);
        Ok(lw)
    }
}

fn pick<T>(side: Side, mu: T, nu: T) -> T {
    match side {
        Side::Mu => mu,
        Side::Nu => nu,
    }
}

/// The marginal on `side` at time `t` (particles, or a grid discretisation).
pub fn interpolate(path: &PathSpec, side: Side, t: f64) -> Result<DiscreteMeasure> {
    match path {
        PathSpec::LinearPairs { mu, nu } => {
            let ends = pick(side, mu, nu);
            let d = ends.start.dim();
            let mut pts = Points::empty(d);
            let mut p = vec![0.0; d];
            for i in 0..ends.start.len() {
                ends.position(t, i, &mut p);
                pts.push(&p);
            }
            DiscreteMeasure::uniform(pts)
        }
        _ => {
            let grid = path.grid().cloned().ok_or(Error::OutOfFamily("paths without a grid"))?;
            let lw = path.grid_log_masses(side, t)?;
            DiscreteMeasure::from_log_weights(grid.centers(), lw, Support::Grid(grid))
        }
    }
}

/// Velocity of particle `i` on a linear-pairs path (constant in `t`).
pub fn particle_velocity(path: &PathSpec, side: Side, i: usize) -> Result<Vec<f64>> {
    let ends = path.pairs(side).ok_or(Error::OutOfFamily("non-particle paths"))?;
    Ok(ends.end.row(i).iter().zip(ends.start.row(i)).map(|(b, a)| b - a).collect())
}

/// Velocity field at `x`; defined for the Gaussian family only.
pub fn velocity(path: &PathSpec, side: Side, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    match path {
        PathSpec::GaussianAnalytic { mu, nu, .. } => Ok(pick(side, mu, nu).velocity(t, x)),
        PathSpec::LinearPairs { .. } => Err(Error::OutOfFamily("particle paths (use particle_velocity)")),
        PathSpec::GridMixture { .. } => Err(Error::OutOfFamily("mixture paths (velocity is not unique)")),
    }
}

/// Velocities at every support point of `interpolate(path, side, t)`.
pub fn velocities(path: &PathSpec, side: Side, t: f64) -> Result<Points> {
    match path {
        PathSpec::LinearPairs { mu, nu } => {
            let ends = pick(side, mu, nu);
            let mut out = Points::empty(ends.start.dim());
            for i in 0..ends.start.len() {
                out.push(&particle_velocity(path, side, i)?);
            }
            Ok(out)
        }
        _ => {
            let grid = path.grid().ok_or(Error::OutOfFamily("paths without a grid"))?;
            let mut out = Points::empty(grid.dim());
            for x in grid.centers().iter() {
                out.push(&velocity(path, side, t, x)?);
            }
            Ok(out)
        }
    }
}

/// Pointwise log-density rate `zeta_t(x) = d/dt log mu_t(x)`.
pub fn forcing(path: &PathSpec, side: Side, t: f64, x: &[f64]) -> Result<f64> {
    match path {
        PathSpec::LinearPairs { .. } => Err(Error::OutOfFamily("particle paths (use the weak form)")),
        PathSpec::GaussianAnalytic { mu, nu, .. } => Ok(pick(side, mu, nu).forcing(t, x)),
        PathSpec::GridMixture { .. } => {
            let h = FORCING_FD_STEP;
            Ok((path.log_density(side, t + h, x)? - path.log_density(side, t - h, x)?) / (2.0 * h))
        }
    }
}

/// Rate of the normalised log cell masses, by centred differences in `t`.
/// Integrates to zero against the grid marginal up to `O(h^2)`.
pub fn grid_forcing(path: &PathSpec, side: Side, t: f64) -> Result<Vec<f64>> {
    let h = FORCING_FD_STEP;
    let up = path.grid_log_masses(side, t + h)?;
    let down = path.grid_log_masses(side, t - h)?;
    Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// A bijection `perm` so that `start[i]` is paired with `end[perm[i]]`.
pub fn pair_points(start: &Points, end: &Points, method: Pairing) -> Result<Vec<usize>> {
    if start.len() != end.len() {
        return Err(Error::BadPairing(format!("{} start points but {} end points", start.len(), end.len())));
    }
    if start.dim() != end.dim() {
        return Err(Error::DimensionMismatch { expected: start.dim(), found: end.dim() });
    }
    match method {
        Pairing::GreedyNearest => Ok(greedy(start, end)),
        Pairing::GreedyStandardized => Ok(greedy(&standardize(start), &standardize(end))),
        Pairing::Sinkhorn => sinkhorn_pairing(&standardize(start), &standardize(end)),
    }
}

fn standardize(p: &Points) -> Points {
    let m = p.mean();
    let var: f64 = p.iter().map(|x| sq_dist(x, &m)).sum::<f64>() / (p.len().max(1) * p.dim()) as f64;
    let s = if var > 0.0 { var.sqrt() } else { 1.0 };
    p.map(|x| x.iter().zip(&m).map(|(a, b)| (a - b) / s).collect())
}

fn greedy(start: &Points, end: &Points) -> Vec<usize> {
    let n = start.len();
    let mut taken = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for x in start.iter() {
        let mut best = usize::MAX;
        let mut bd = f64::INFINITY;
        for (j, y) in end.iter().enumerate() {
            if !taken[j] {
                let d = sq_dist(x, y);
                if d < bd {
                    bd = d;
                    best = j;
                }
            }
        }
        taken[best] = true;
        perm.push(best);
    }
    perm
}

/// Entropic plan between the clouds, rounded greedily by descending mass.
fn sinkhorn_pairing(start: &Points, end: &Points) -> Result<Vec<usize>> {
    let n = start.len();
    let a = DiscreteMeasure::uniform(start.clone())?;
    let b = DiscreteMeasure::uniform(end.clone())?;
    let cost = sinkhorn::cost_matrix(start, end, &CostSpec::SquaredEuclidean)?;
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    let cfg = SinkhornConfig { epsilon: 0.01 * mean_cost.max(1e-12), tol: 1e-6, max_iter: 20_000 };
    let plan = sinkhorn::solve_matrix(&a, &b, &cost, &cfg, None)?.plan;
    let mut order: Vec<usize> = (0..n * n).collect();
    let lw = plan.log_weights();
    order.sort_by(|&p, &q| lw[q].total_cmp(&lw[p]));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut left = n;
    for k in order {
        let (i, j) = (k / n, k % n);
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Points {
        Points::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn linear_pairs_midpoint() {
        let ends = PairedEnds { start: line(&[0.0]), end: line(&[4.0]) };
        let path = PathSpec::LinearPairs { mu: ends.clone(), nu: ends };
        let m = interpolate(&path, Side::Mu, 0.25).unwrap();
        assert_eq!(m.points().row(0), &[1.0]);
        assert_eq!(particle_velocity(&path, Side::Mu, 0).unwrap(), vec![4.0]);
        assert!(matches!(forcing(&path, Side::Mu, 0.5, &[0.0]), Err(Error::OutOfFamily(_))));
    }

    #[test]
    fn translation_forcing() {
        let g = GaussianEnds { mean0: vec![0.0], cov0: vec![1.0], mean1: vec![1.0], cov1: vec![1.0] };
        let path = PathSpec::GaussianAnalytic { mu: g.clone(), nu: g, grid: GridSpec::new(vec![[-5.0, 5.0]], 10).unwrap() };
        let t = 0.3;
        assert!((forcing(&path, Side::Mu, t, &[t + 1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairing_rejects_unequal_clouds() {
        assert!(matches!(pair_points(&line(&[0.0, 1.0]), &line(&[0.0]), Pairing::GreedyNearest), Err(Error::BadPairing(_))));
    }

    #[test]
    fn pairings_are_bijections() {
        let a = line(&[0.0, 1.0, 2.0, 3.0]);
        let b = line(&[13.0, 10.0, 12.0, 11.0]);
        for m in [Pairing::GreedyNearest, Pairing::GreedyStandardized, Pairing::Sinkhorn] {
            let mut p = pair_points(&a, &b, m).unwrap();
            p.sort();
            assert_eq!(p, vec![0, 1, 2, 3]);
        }
        assert_eq!(pair_points(&a, &b, Pairing::GreedyStandardized).unwrap(), vec![1, 3, 2, 0]);
    }
}
