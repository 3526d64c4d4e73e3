//! Sample-based discrepancies between point clouds.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{apply_map_points, GroundTruthMap};
use crate::math::{median, sq_dist};
use crate::measures::{DiscreteMeasure, Points};
use crate::rng::{rng, STREAM_METRICS};
use crate::sinkhorn::{self, SinkhornConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MmdEstimator {
    Unbiased,
    /// V-statistic; exactly zero for identical sample sets.
    Biased,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetricConfig {
    pub n_projections: usize,
    pub seed: u64,
    pub mmd_estimator: MmdEstimator,
    /// RBF bandwidth; median heuristic on the pooled sample when absent.
    pub bandwidth: Option<f64>,
    pub sinkhorn_epsilon: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { n_projections: 512, seed: 0, mmd_estimator: MmdEstimator::Unbiased, bandwidth: None, sinkhorn_epsilon: 0.05 }
    }
}

fn check_dims(p: &Points, q: &Points) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    if p.is_empty() || q.is_empty() {
        return Err(Error::ZeroMass);
    }
    Ok(())
}

/// `int_0^1 |F^-1(u) - G^-1(u)|^p du` for two sorted uniform empirical samples.
fn quantile_cost(a: &[f64], b: &[f64], p: f64) -> f64 {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next = ((i + 1) as f64 / na).min((j + 1) as f64 / nb);
        total += (next - u) * (a[i] - b[j]).abs().powf(p);
        u = next;
        if ((i + 1) as f64 / na) <= next {
            i += 1;
        }
        if ((j + 1) as f64 / nb) <= next {
            j += 1;
        }
    }
    total
}

/// Sliced Wasserstein distance of order `order` over seeded random directions.
pub fn sliced_wasserstein(p: &Points, q: &Points, order: f64, cfg: &MetricConfig) -> Result<f64> {
    check_dims(p, q)?;
    let d = p.dim();
    let mut r = rng(cfg.seed, STREAM_METRICS);
    let mut dir = vec![0.0; d];
    let mut pa = vec![0.0; p.len()];
    let mut qa = vec![0.0; q.len()];
    let mut acc = 0.0;
    let n_proj = cfg.n_projections.max(1);
    for _ in 0..n_proj {
        let mut norm = 0.0;
        while !(norm > 1e-12) {
            for v in dir.iter_mut() {
                *v = r.sample(StandardNormal);
            }
            norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        dir.iter_mut().for_each(|v| *v /= norm);
        for (o, x) in pa.iter_mut().zip(p.iter()) {
            *o = crate::math::dot(x, &dir);
        }
        for (o, x) in qa.iter_mut().zip(q.iter()) {
            *o = crate::math::dot(x, &dir);
        }
        pa.sort_by(|a, b| a.total_cmp(b));
        qa.sort_by(|a, b| a.total_cmp(b));
        acc += quantile_cost(&pa, &qa, order);
    }
    Ok((acc / n_proj as f64).powf(1.0 / order))
}

/// Median pairwise distance of the pooled sample (at most 1000 points of each).
pub fn median_bandwidth(p: &Points, q: &Points) -> f64 {
    let mut pool = p.head(1000);
    pool.extend(&q.head(1000));
    let n = pool.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(pool.row(i), pool.row(j)).sqrt());
        }
    }
    let m = median(&mut d);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn kernel_sum(a: &Points, b: &Points, h: f64, skip_diag: bool) -> f64 {
    let inv = 0.5 / (h * h);
    let mut s = 0.0;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if skip_diag && i == j {
                continue;
            }
            s += (-inv * sq_dist(x, y)).exp();
        }
    }
    s
}

/// Maximum mean discrepancy with a Gaussian kernel; returns `MMD` (not squared).
pub fn mmd_rbf(p: &Points, q: &Points, cfg: &MetricConfig) -> Result<f64> {
    check_dims(p, q)?;
    let h = cfg.bandwidth.unwrap_or_else(|| median_bandwidth(p, q));
    let (m, n) = (p.len() as f64, q.len() as f64);
    let unbiased = cfg.mmd_estimator == MmdEstimator::Unbiased && p.len() > 1 && q.len() > 1;
    let v = if unbiased {
        kernel_sum(p, p, h, true) / (m * (m - 1.0)) + kernel_sum(q, q, h, true) / (n * (n - 1.0))
            - 2.0 * kernel_sum(p, q, h, false) / (m * n)
    } else {
        kernel_sum(p, p, h, false) / (m * m) + kernel_sum(q, q, h, false) / (n * n) - 2.0 * kernel_sum(p, q, h, false) / (m * n)
    };
    Ok(v.max(0.0).sqrt())
}

fn mean_distance(a: &Points, b: &Points) -> f64 {
    let mut s = 0.0;
    for x in a.iter() {
        for y in b.iter() {
            s += sq_dist(x, y).sqrt();
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|` (V-statistic, nonnegative).
pub fn energy_distance(p: &Points, q: &Points) -> Result<f64> {
    check_dims(p, q)?;
    Ok((2.0 * mean_distance(p, q) - mean_distance(p, p) - mean_distance(q, q)).max(0.0))
}

/// Root mean squared error of transported points against `T(sources)`.
pub fn map_rmse(sources: &Points, transported: &Points, map: &GroundTruthMap) -> Result<f64> {
    check_dims(sources, transported)?;
    if sources.len() != transported.len() {
        return Err(Error::ShapeMismatch("one transported point per source is required".into()));
    }
    let truth = apply_map_points(map, sources);
    let s: f64 = truth.iter().zip(transported.iter()).map(|(a, b)| sq_dist(a, b)).sum();
    Ok((s / sources.len() as f64).sqrt())
}

/// Debiased Sinkhorn divergence between two uniform clouds.
pub fn sinkhorn_div(p: &Points, q: &Points, cfg: &MetricConfig) -> Result<f64> {
    check_dims(p, q)?;
    let a = DiscreteMeasure::uniform(p.clone())?;
    let b = DiscreteMeasure::uniform(q.clone())?;
    let sc = SinkhornConfig { epsilon: cfg.sinkhorn_epsilon, tol: 1e-6, max_iter: 200 };
    sinkhorn::sinkhorn_divergence(&a, &b, &sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(d: usize, v: &[f64]) -> Points {
        Points::new(d, v.to_vec()).unwrap()
    }

    #[test]
    fn sw_one_dimensional_atoms() {
        let cfg = MetricConfig { n_projections: 16, ..Default::default() };
        let v = sliced_wasserstein(&pts(1, &[0.0]), &pts(1, &[1.0]), 2.0, &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sw_planar_atoms() {
        let cfg = MetricConfig { n_projections: 4096, ..Default::default() };
        let v = sliced_wasserstein(&pts(2, &[0.0, 0.0]), &pts(2, &[1.0, 0.0]), 2.0, &cfg).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn sw_unequal_sizes() {
        let cfg = MetricConfig { n_projections: 8, ..Default::default() };
        let a = pts(1, &[0.0, 1.0]);
        let b = pts(1, &[0.0, 0.0, 1.0, 1.0]);
        assert!(sliced_wasserstein(&a, &b, 2.0, &cfg).unwrap() < 1e-12);
    }

    #[test]
    fn mmd_two_atoms() {
        let (d, h) = (1.3f64, 0.7f64);
        let cfg = MetricConfig { bandwidth: Some(h), mmd_estimator: MmdEstimator::Biased, ..Default::default() };
        let m = mmd_rbf(&pts(1, &[0.0]), &pts(1, &[d]), &cfg).unwrap();
        let expect = 2.0 * (1.0 - (-d * d / (2.0 * h * h)).exp());
        assert!((m * m - expect).abs() < 1e-12);
    }

    #[test]
    fn energy_two_atoms() {
        let e = energy_distance(&pts(2, &[0.0, 0.0]), &pts(2, &[3.0, 4.0])).unwrap();
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_of_exact_map_is_zero() {
        let s = pts(2, &[1.0, 2.0, -3.0, 0.5]);
        let t = apply_map_points(&GroundTruthMap::Negation, &s);
        assert_eq!(map_rmse(&s, &t, &GroundTruthMap::Negation).unwrap(), 0.0);
    }
}
