//! Sampling from a weighted pair cloud through Brownian-bridge interpolants.
//!
//! For a pair `(x, y)` the lifted interpolant at time `s` is
//! `I_s = ((1-s) x + s y + sigma_s xi_1,  x + sigma_s xi_2)` with
//! `sigma_s^2 = sigma^2 s (1-s)`. The regression field
//! `beta_s(z) = E[v_s(z | X, Y) | I_s = z]` is evaluated exactly over the
//! cloud, and integrating `dz/ds = beta_s(z)` from `z = (x0, x0)` carries a
//! source to a draw of the conditional `Y | X = x0`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::marginal_path::{particle_velocity, PathSpec, Side};
use crate::math::LOG_UNDERFLOW;
use crate::measures::{systematic_resample, Coupling, Points};
use crate::tilting::{TiltRates, EXPONENT_GUARD};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BridgeConfig {
    pub sigma: f64,
    /// Interpolation-time truncation; `1 / (2 euler_steps)` when absent.
    pub s_min: Option<f64>,
    pub euler_steps: usize,
    /// Drop pairs farther than this many `sigma_s` from the query.
    pub neighbor_truncation: Option<f64>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { sigma: 0.1, s_min: None, euler_steps: 200, neighbor_truncation: None }
    }
}

impl BridgeConfig {
    pub fn s_min(&self) -> f64 {
        self.s_min.unwrap_or(1.0 / (2.0 * self.euler_steps as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.s_min();
        if !(self.sigma > 0.0) || self.euler_steps < 2 || !(s > 0.0 && s < 0.5) {
            return Err(Error::InvalidConfig("bridge needs sigma > 0, euler_steps >= 2, 0 < s_min < 0.5".into()));
        }
        Ok(())
    }
}

/// A point of the lifted space: the moving coordinate and the frozen one.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedState {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

/// Mean and per-coordinate variance of the bridge at time `s`.
pub fn bridge_moments(x: &[f64], y: &[f64], s: f64, sigma: f64) -> (Vec<f64>, f64) {
    let m = x.iter().zip(y).map(|(a, b)| (1.0 - s) * a + s * b).collect();
    (m, sigma * sigma * s * (1.0 - s))
}

/// `v_s(z | x, y) = (y - x) + (1 - 2s) / (2 s (1 - s)) (z - m_s)`.
pub fn conditional_velocity(x: &[f64], y: &[f64], s: f64, z: &[f64]) -> Vec<f64> {
    let c = (1.0 - 2.0 * s) / (2.0 * s * (1.0 - s));
    x.iter().zip(y).zip(z).map(|((a, b), zz)| (b - a) + c * (zz - ((1.0 - s) * a + s * b))).collect()
}

/// Flattened view of a coupling's entries for repeated field queries.
pub struct BetaEvaluator {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    log_w: Vec<f64>,
    /// Support indices of each kept entry.
    index: Vec<(usize, usize)>,
}

impl BetaEvaluator {
    pub fn new(c: &Coupling) -> Self {
        let d = c.dim();
        let mut xs = Vec::with_capacity(c.len() * d);
        let mut ys = Vec::with_capacity(c.len() * d);
        let mut log_w = Vec::with_capacity(c.len());
        let mut index = Vec::with_capacity(c.len());
        for (k, lw) in c.log_weights().iter().enumerate() {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            let (i, j) = c.entry(k);
            xs.extend_from_slice(c.x_support().row(i));
            ys.extend_from_slice(c.y_support().row(j));
            log_w.push(*lw);
            index.push((i, j));
        }
        Self { dim: d, xs, ys, log_w, index }
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    /// Log of the unnormalised posterior weight of every entry given `I_s = z`.
    fn posterior(&self, s: f64, z: &LiftedState, cfg: &BridgeConfig, out: &mut Vec<f64>) -> Result<f64> {
        let d = self.dim;
        let var = cfg.sigma * cfg.sigma * s * (1.0 - s);
        let inv = 0.5 / var;
        let cut = cfg.neighbor_truncation.map(|r| r * r * var).unwrap_or(f64::INFINITY);
        out.clear();
        let mut best = f64::NEG_INFINITY;
        for k in 0..self.log_w.len() {
            let x = &self.xs[k * d..(k + 1) * d];
            let y = &self.ys[k * d..(k + 1) * d];
            let mut r2 = 0.0;
            for a in 0..d {
                let m = x[a] + s * (y[a] - x[a]);
                let e1 = z.z1[a] - m;
                let e2 = z.z2[a] - x[a];
                r2 += e1 * e1 + e2 * e2;
            }
            let l = if r2 > cut { f64::NEG_INFINITY } else { self.log_w[k] - inv * r2 };
            best = best.max(l);
            out.push(l);
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::DegenerateDenominator { s });
        }
        Ok(best)
    }

    pub fn beta(&self, s: f64, z: &LiftedState, cfg: &BridgeConfig, scratch: &mut Vec<f64>) -> Result<Vec<f64>> {
        let d = self.dim;
        let best = self.posterior(s, z, cfg, scratch)?;
        let c = (1.0 - 2.0 * s) / (2.0 * s * (1.0 - s));
        let mut acc = vec![0.0; d];
        let mut total = 0.0;
        for (k, l) in scratch.iter().enumerate() {
            let r = l - best;
            if r < LOG_UNDERFLOW {
                continue;
            }
            let w = r.exp();
            total += w;
            let x = &self.xs[k * d..(k + 1) * d];
            let y = &self.ys[k * d..(k + 1) * d];
            for a in 0..d {
                let m = x[a] + s * (y[a] - x[a]);
                acc[a] += w * ((y[a] - x[a]) + c * (z.z1[a] - m));
            }
        }
        acc.iter_mut().for_each(|v| *v /= total);
        Ok(acc)
    }

    /// `Cov(v_s(z | X, Y), a(X) + b(Y) | I_s = z)`.
    pub fn covariance(&self, rates: &TiltRates, s: f64, z: &LiftedState, cfg: &BridgeConfig) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut scratch = Vec::new();
        let best = self.posterior(s, z, cfg, &mut scratch)?;
        let c = (1.0 - 2.0 * s) / (2.0 * s * (1.0 - s));
        let mut w = Vec::with_capacity(scratch.len());
        let mut total = 0.0;
        for l in &scratch {
            let r = l - best;
            let v = if r < LOG_UNDERFLOW { 0.0 } else { r.exp() };
            total += v;
            w.push(v);
        }
        let f: Vec<f64> = self.index.iter().map(|&(i, j)| rates.a[i] + rates.b[j]).collect();
        let f_mean: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / total;
        let mut cross = vec![0.0; d];
        for k in 0..w.len() {
            if w[k] == 0.0 {
                continue;
            }
            let x = &self.xs[k * d..(k + 1) * d];
            let y = &self.ys[k * d..(k + 1) * d];
            for a in 0..d {
                let m = x[a] + s * (y[a] - x[a]);
                let v = (y[a] - x[a]) + c * (z.z1[a] - m);
                cross[a] += w[k] * v * (f[k] - f_mean) / total;
            }
        }
        Ok(cross)
    }

    /// `E[Y - X | X = x0]` under the posterior of the frozen coordinate alone,
    /// which is the limit of `beta` as `s -> 0` from `z = (x0, x0)`.
    fn start_drift(&self, x0: &[f64], s: f64, cfg: &BridgeConfig, scratch: &mut Vec<f64>) -> Result<Vec<f64>> {
        let d = self.dim;
        let inv = 0.5 / (cfg.sigma * cfg.sigma * s * (1.0 - s));
        scratch.clear();
        let mut best = f64::NEG_INFINITY;
        for k in 0..self.log_w.len() {
            let x = &self.xs[k * d..(k + 1) * d];
            let l = self.log_w[k] - inv * crate::math::sq_dist(x0, x);
            best = best.max(l);
            scratch.push(l);
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::DegenerateDenominator { s });
        }
        let mut acc = vec![0.0; d];
        let mut total = 0.0;
        for (k, l) in scratch.iter().enumerate() {
            let r = l - best;
            if r < LOG_UNDERFLOW {
                continue;
            }
            let w = r.exp();
            total += w;
            for a in 0..d {
                acc[a] += w * (self.ys[k * d + a] - self.xs[k * d + a]);
            }
        }
        acc.iter_mut().for_each(|v| *v /= total);
        Ok(acc)
    }

    /// Frozen-ODE transport of one source through `[s_min, 1 - s_min]`.
    /// Both truncated ends are bridged by a jump of `s_min * beta` at the
    /// nearest evaluable time, so the source travels the full unit interval.
    pub fn transport(&self, x0: &[f64], cfg: &BridgeConfig, scratch: &mut Vec<f64>) -> Result<Vec<f64>> {
        let s_min = cfg.s_min();
        let h = (1.0 - 2.0 * s_min) / cfg.euler_steps as f64;
        let mut z = LiftedState { z1: x0.to_vec(), z2: x0.to_vec() };
        let b = self.start_drift(x0, s_min, cfg, scratch)?;
        z.z1.iter_mut().zip(&b).for_each(|(p, v)| *p += s_min * v);
        for k in 0..cfg.euler_steps {
            let s = s_min + k as f64 * h;
            let b = self.beta(s, &z, cfg, scratch)?;
            z.z1.iter_mut().zip(&b).for_each(|(p, v)| *p += h * v);
        }
        let b = self.beta(1.0 - s_min, &z, cfg, scratch)?;
        z.z1.iter_mut().zip(&b).for_each(|(p, v)| *p += s_min * v);
        Ok(z.z1)
    }
}

pub fn beta_field(c: &Coupling, s: f64, z: &LiftedState, cfg: &BridgeConfig) -> Result<Vec<f64>> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidConfig("beta_field needs s in (0, 1)".into()));
    }
    BetaEvaluator::new(c).beta(s, z, cfg, &mut Vec::new())
}

pub fn covariance_rate(c: &Coupling, rates: &TiltRates, s: f64, z: &LiftedState, cfg: &BridgeConfig) -> Result<Vec<f64>> {
    BetaEvaluator::new(c).covariance(rates, s, z, cfg)
}

/// Transports every source; sequential counterpart of the threaded driver.
pub fn integrate(c: &Coupling, sources: &Points, cfg: &BridgeConfig) -> Result<Points> {
    cfg.validate()?;
    let eval = BetaEvaluator::new(c);
    let mut out = Points::empty(sources.dim());
    let mut scratch = Vec::new();
    for x in sources.iter() {
        out.push(&eval.transport(x, cfg, &mut scratch)?);
    }
    Ok(out)
}

/// Persistent particle slots carried next to the flow portion of the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSlots {
    /// Number of flow pairs that precede the slots in the union coupling.
    pub flow_len: usize,
    pub x: Points,
    pub y: Points,
    /// Particle indices on the mu-side and nu-side paths.
    pub x_index: Vec<usize>,
    pub y_index: Vec<usize>,
}

impl ParticleSlots {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Splits a uniform reference pair cloud into a flow portion and `round(alpha n)`
/// particle slots chosen by `rng`; returns the union coupling and the slots.
pub fn init_mixture<R: Rng + ?Sized>(reference: &Coupling, alpha: f64, rng: &mut R) -> Result<(Coupling, ParticleSlots)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
    }
    let n = reference.len();
    let n_slots = (alpha * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (slot_idx, flow_idx) = order.split_at(n_slots);
    let mut slot_idx = slot_idx.to_vec();
    let mut flow_idx = flow_idx.to_vec();
    slot_idx.sort_unstable();
    flow_idx.sort_unstable();
    let slots = ParticleSlots {
        flow_len: flow_idx.len(),
        x: reference.x_support().select(&slot_idx),
        y: reference.y_support().select(&slot_idx),
        x_index: slot_idx.clone(),
        y_index: slot_idx,
    };
    let flow_lw: Vec<f64> = flow_idx.iter().map(|&i| reference.log_weights()[i]).collect();
    let c = union(reference.x_support().select(&flow_idx), reference.y_support().select(&flow_idx), flow_lw, &slots, alpha)?;
    Ok((c, slots))
}

fn union(fx: Points, fy: Points, flow_lw: Vec<f64>, slots: &ParticleSlots, alpha: f64) -> Result<Coupling> {
    if slots.is_empty() {
        return Coupling::pairs_from_log(fx, fy, flow_lw);
    }
    let ns = slots.len();
    let mut lw = flow_lw;
    if !lw.is_empty() {
        crate::math::log_normalize(&mut lw);
        let lf = (1.0 - alpha).ln();
        lw.iter_mut().for_each(|w| *w += lf);
    }
    let ls = (alpha / ns as f64).ln();
    lw.extend(core::iter::repeat_n(ls, ns));
    let (mut xs, mut ys) = (fx, fy);
    xs.extend(&slots.x);
    ys.extend(&slots.y);
    Coupling::pairs_from_log(xs, ys, lw)
}

/// One outer step: tilt the flow portion, advance every slot by one Euler
/// step along the path velocities at `t_k = k delta`.
pub fn weighted_update(
    c: &Coupling,
    rates: &TiltRates,
    delta: f64,
    alpha: f64,
    slots: &ParticleSlots,
    path: &PathSpec,
    _k: usize,
) -> Result<(Coupling, ParticleSlots)> {
    let n = c.len();
    if slots.len() != (alpha * n as f64).round() as usize || slots.flow_len + slots.len() != n {
        return Err(Error::SlotCountMismatch);
    }
    if rates.a.len() != n || rates.b.len() != n {
        return Err(Error::ShapeMismatch("rates do not match the coupling".into()));
    }
    let f = slots.flow_len;
    let mut lw = c.log_weights()[..f].to_vec();
    for (i, w) in lw.iter_mut().enumerate() {
        let e = delta * (rates.a[i] + rates.b[i]);
        if !(e.abs() <= EXPONENT_GUARD) {
            return Err(Error::NumericalOverflow { value: e });
        }
        *w += e;
    }
    let mut next = slots.clone();
    for s in 0..slots.len() {
        let u = particle_velocity(path, Side::Mu, slots.x_index[s])?;
        let v = particle_velocity(path, Side::Nu, slots.y_index[s])?;
        next.x.row_mut(s).iter_mut().zip(&u).for_each(|(p, d)| *p += delta * d);
        next.y.row_mut(s).iter_mut().zip(&v).for_each(|(p, d)| *p += delta * d);
    }
    let fx = c.x_support().head(f);
    let fy = c.y_support().head(f);
    Ok((union(fx, fy, lw, &next, alpha)?, next))
}

/// Systematic resampling of the flow portion; slots are untouched.
pub fn resample_flow<R: Rng + ?Sized>(c: &Coupling, slots: &ParticleSlots, alpha: f64, rng: &mut R) -> Result<Coupling> {
    let f = slots.flow_len;
    if f == 0 {
        return Ok(c.clone());
    }
    let idx = systematic_resample(&c.weights()[..f], f, rng);
    let fx = c.x_support().select(&idx);
    let fy = c.y_support().select(&idx);
    union(fx, fy, vec![0.0; f], slots, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_example() {
        let v = conditional_velocity(&[0.0], &[1.0], 0.25, &[0.5]);
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bridge_variance_example() {
        let (m, var) = bridge_moments(&[0.0], &[2.0], 0.5, 0.1);
        assert_eq!(m, vec![1.0]);
        assert!((var - 0.0025).abs() < 1e-18);
    }

    #[test]
    fn single_pair_field_is_its_velocity() {
        let x = Points::new(2, vec![0.0, 1.0]).unwrap();
        let y = Points::new(2, vec![3.0, -1.0]).unwrap();
        let c = Coupling::uniform_pairs(x, y).unwrap();
        let z = LiftedState { z1: vec![0.7, 0.2], z2: vec![5.0, 5.0] };
        let b = beta_field(&c, 0.3, &z, &BridgeConfig::default()).unwrap();
        let v = conditional_velocity(&[0.0, 1.0], &[3.0, -1.0], 0.3, &z.z1);
        assert!((b[0] - v[0]).abs() < 1e-12 && (b[1] - v[1]).abs() < 1e-12);
    }
}
