//! Discrete measures and couplings.
//!
//! Weights are stored in the log domain and normalised so that their
//! log-sum-exp is zero; the linear weights are cached next to them. Grid
//! instances of the transfer problem routinely carry masses like `e^-1500`
//! in their tails, which a linear representation would flush to zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{exp_all, log_normalize, logsumexp};

/// A flat list of points in `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!("{} coordinates do not split into points of dimension {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.data.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &Points) {
        debug_assert_eq!(other.dim, self.dim);
        self.data.extend_from_slice(&other.data);
    }

    pub fn select(&self, idx: &[usize]) -> Points {
        let mut out = Points { dim: self.dim, data: Vec::with_capacity(idx.len() * self.dim) };
        for &i in idx {
            out.push(self.row(i));
        }
        out
    }

    pub fn head(&self, n: usize) -> Points {
        let n = n.min(self.len());
        Points { dim: self.dim, data: self.data[..n * self.dim].to_vec() }
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Points {
        let mut out = Points::empty(self.dim);
        for p in self.iter() {
            out.push(&f(p));
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            m.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(|p| p.to_vec()).collect()
    }
}

/// A regular grid: `resolution` cells per axis over axis-aligned bounds.
/// Cells are ordered row-major with the last axis varying fastest.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub bounds: Vec<[f64; 2]>,
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(bounds: Vec<[f64; 2]>, resolution: usize) -> Result<Self> {
        if bounds.is_empty() || resolution == 0 {
            return Err(Error::InvalidConfig("grid needs at least one axis and one cell".into()));
        }
        if bounds.iter().any(|b| !(b[0] < b[1])) {
            return Err(Error::InvalidConfig("grid bounds must satisfy lo < hi".into()));
        }
        Ok(Self { bounds, resolution })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn n_cells(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.bounds[axis][1] - self.bounds[axis][0]) / self.resolution as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn centers(&self) -> Points {
        let d = self.dim();
        let mut out = Points::empty(d);
        let mut p = vec![0.0; d];
        for cell in 0..self.n_cells() {
            let mut rem = cell;
            for axis in (0..d).rev() {
                let k = rem % self.resolution;
                rem /= self.resolution;
                p[axis] = self.bounds[axis][0] + (k as f64 + 0.5) * self.width(axis);
            }
            out.push(&p);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Particle,
    Grid(GridSpec),
}

/// Weighted atoms. Construction always renormalises the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: Points,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    support: Support,
}

/// Rescales nonnegative weights to sum to one.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroMass);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn checked_log_normalize(mut lw: Vec<f64>) -> Result<Vec<f64>> {
    if lw.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidWeights);
    }
    let z = log_normalize(&mut lw);
    if !z.is_finite() {
        return Err(Error::ZeroMass);
    }
    Ok(lw)
}

impl DiscreteMeasure {
    pub fn new(points: Points, weights: &[f64], support: Support) -> Result<Self> {
        let w = normalize(weights)?;
        let lw = w.iter().map(|x| x.ln()).collect();
        Self::assemble(points, lw, w, support)
    }

    pub fn from_log_weights(points: Points, log_weights: Vec<f64>, support: Support) -> Result<Self> {
        let lw = checked_log_normalize(log_weights)?;
        let w = exp_all(&lw);
        Self::assemble(points, lw, w, support)
    }

    fn assemble(points: Points, lw: Vec<f64>, w: Vec<f64>, support: Support) -> Result<Self> {
        if points.len() != w.len() {
            return Err(Error::ShapeMismatch(format!("{} points but {} weights", points.len(), w.len())));
        }
        if let Support::Grid(g) = &support {
            if g.dim() != points.dim() || g.n_cells() != points.len() {
                return Err(Error::ShapeMismatch("grid does not match the point set".into()));
            }
        }
        Ok(Self { points, log_weights: lw, weights: w, support })
    }

    pub fn particles(points: Points, weights: &[f64]) -> Result<Self> {
        Self::new(points, weights, Support::Particle)
    }

    pub fn uniform(points: Points) -> Result<Self> {
        let n = points.len();
        Self::new(points, &vec![1.0; n], Support::Particle)
    }

    pub fn on_grid(grid: GridSpec, weights: &[f64]) -> Result<Self> {
        Self::new(grid.centers(), weights, Support::Grid(grid))
    }

    /// Discretises a (possibly unnormalised) log density by its cell-centre values.
    pub fn grid_from_log_density(grid: GridSpec, log_density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let centers = grid.centers();
        let lw = centers.iter().map(&log_density).collect();
        Self::from_log_weights(centers, lw, Support::Grid(grid))
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.support {
            Support::Grid(g) => Some(g),
            Support::Particle => None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            m.iter_mut().zip(p).for_each(|(a, b)| *a += w * b);
        }
        m
    }

    pub fn same_support(&self, other: &DiscreteMeasure) -> bool {
        self.points == other.points
    }
}

/// Renormalising identity on an already-built measure, kept for symmetry
/// with [`normalize`] on raw weights.
pub fn normalize_measure(m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_log_weights(m.points.clone(), m.log_weights.clone(), m.support.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Full `n_x * n_y` table over two supports, row-major in x.
    Table,
    /// One entry per pair `(x_k, y_k)`.
    Pairs,
}

/// A joint measure on `X x Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    xs: Points,
    ys: Points,
    x_grid: Option<GridSpec>,
    y_grid: Option<GridSpec>,
    layout: Layout,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    epsilon_hint: Option<f64>,
}

impl Coupling {
    pub fn pairs(xs: Points, ys: Points, weights: &[f64]) -> Result<Self> {
        let w = normalize(weights)?;
        let lw = w.iter().map(|x| x.ln()).collect();
        Self::pairs_from_log(xs, ys, lw).map(|mut c| {
            c.weights = w;
            c
        })
    }

    pub fn uniform_pairs(xs: Points, ys: Points) -> Result<Self> {
        let n = xs.len();
        Self::pairs(xs, ys, &vec![1.0; n])
    }

    pub fn pairs_from_log(xs: Points, ys: Points, log_weights: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() != log_weights.len() {
            return Err(Error::ShapeMismatch(format!("{} x-points, {} y-points, {} weights", xs.len(), ys.len(), log_weights.len())));
        }
        let lw = checked_log_normalize(log_weights)?;
        let w = exp_all(&lw);
        Ok(Self { xs, ys, x_grid: None, y_grid: None, layout: Layout::Pairs, log_weights: lw, weights: w, epsilon_hint: None })
    }

    /// A table coupling over the supports of `mu` and `nu` with the given log weights.
    pub fn table(mu: &DiscreteMeasure, nu: &DiscreteMeasure, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != mu.len() * nu.len() {
            return Err(Error::ShapeMismatch(format!("table of {} entries for a {}x{} support", log_weights.len(), mu.len(), nu.len())));
        }
        let lw = checked_log_normalize(log_weights)?;
        let w = exp_all(&lw);
        Ok(Self {
            xs: mu.points.clone(),
            ys: nu.points.clone(),
            x_grid: mu.grid().cloned(),
            y_grid: nu.grid().cloned(),
            layout: Layout::Table,
            log_weights: lw,
            weights: w,
            epsilon_hint: None,
        })
    }

    pub fn product(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        let mut lw = Vec::with_capacity(mu.len() * nu.len());
        for a in mu.log_weights() {
            for b in nu.log_weights() {
                lw.push(a + b);
            }
        }
        Self::table(mu, nu, lw)
    }

    /// Same support and layout, new (unnormalised) log weights.
    pub fn with_log_weights(&self, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != self.log_weights.len() {
            return Err(Error::ShapeMismatch("weight vector does not match the coupling".into()));
        }
        let lw = checked_log_normalize(log_weights)?;
        let w = exp_all(&lw);
        Ok(Self { log_weights: lw, weights: w, ..self.clone_support() })
    }

    fn clone_support(&self) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            x_grid: self.x_grid.clone(),
            y_grid: self.y_grid.clone(),
            layout: self.layout,
            log_weights: Vec::new(),
            weights: Vec::new(),
            epsilon_hint: self.epsilon_hint,
        }
    }

    pub fn with_epsilon_hint(mut self, eps: Option<f64>) -> Self {
        self.epsilon_hint = eps;
        self
    }

    pub fn epsilon_hint(&self) -> Option<f64> {
        self.epsilon_hint
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn is_grid(&self) -> bool {
        self.x_grid.is_some() && self.y_grid.is_some()
    }

    pub fn x_grid(&self) -> Option<&GridSpec> {
        self.x_grid.as_ref()
    }

    pub fn y_grid(&self) -> Option<&GridSpec> {
        self.y_grid.as_ref()
    }

    /// Support of the first coordinate: all table rows, or every pair's x.
    pub fn x_support(&self) -> &Points {
        &self.xs
    }

    pub fn y_support(&self) -> &Points {
        &self.ys
    }

    pub fn n_x(&self) -> usize {
        self.xs.len()
    }

    pub fn n_y(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.xs.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Support indices `(i, j)` of entry `k`.
    #[inline]
    pub fn entry(&self, k: usize) -> (usize, usize) {
        match self.layout {
            Layout::Table => (k / self.ys.len(), k % self.ys.len()),
            Layout::Pairs => (k, k),
        }
    }

    pub fn same_support(&self, other: &Coupling) -> bool {
        self.layout == other.layout && self.xs == other.xs && self.ys == other.ys
    }

    pub fn x_log_marginal(&self) -> Vec<f64> {
        match self.layout {
            Layout::Table => self.log_weights.chunks_exact(self.ys.len()).map(logsumexp).collect(),
            Layout::Pairs => self.log_weights.clone(),
        }
    }

    pub fn y_log_marginal(&self) -> Vec<f64> {
        match self.layout {
            Layout::Table => {
                let (nx, ny) = (self.xs.len(), self.ys.len());
                let mut col = vec![0.0; nx];
                (0..ny)
                    .map(|j| {
                        for i in 0..nx {
                            col[i] = self.log_weights[i * ny + j];
                        }
                        logsumexp(&col)
                    })
                    .collect()
            }
            Layout::Pairs => self.log_weights.clone(),
        }
    }
}

fn support_of(grid: &Option<GridSpec>) -> Support {
    match grid {
        Some(g) => Support::Grid(g.clone()),
        None => Support::Particle,
    }
}

/// Both marginals of a coupling.
pub fn marginals(c: &Coupling) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let mu = DiscreteMeasure::from_log_weights(c.xs.clone(), c.x_log_marginal(), support_of(&c.x_grid))?;
    let nu = DiscreteMeasure::from_log_weights(c.ys.clone(), c.y_log_marginal(), support_of(&c.y_grid))?;
    Ok((mu, nu))
}

/// Half the L1 distance between two measures on the same support.
pub fn tv_distance(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    if !p.same_support(q) {
        return Err(Error::ShapeMismatch("measures live on different supports".into()));
    }
    Ok(half_l1(p.weights(), q.weights()))
}

/// Half the L1 distance between two couplings on the same support.
pub fn coupling_tv(p: &Coupling, q: &Coupling) -> Result<f64> {
    if !p.same_support(q) {
        return Err(Error::ShapeMismatch("couplings live on different supports".into()));
    }
    Ok(half_l1(p.weights(), q.weights()))
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if !(s > 0.0) || !(s2 > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(s * s / s2)
}

/// Inverse-CDF draw of one index from normalised weights.
fn draw_index(cdf: &[f64], u: f64) -> usize {
    let k = cdf.partition_point(|&c| c <= u);
    k.min(cdf.len() - 1)
}

fn cdf_of(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// `n` i.i.d. draws; grid cells are jittered uniformly inside the cell.
pub fn sample<R: Rng + ?Sized>(m: &DiscreteMeasure, n: usize, rng: &mut R) -> Points {
    let cdf = cdf_of(m.weights());
    let total = *cdf.last().unwrap_or(&1.0);
    let mut out = Points::empty(m.dim());
    let mut p = vec![0.0; m.dim()];
    for _ in 0..n {
        let k = draw_index(&cdf, rng.random::<f64>() * total);
        p.copy_from_slice(m.points().row(k));
        if let Some(g) = m.grid() {
            for (axis, x) in p.iter_mut().enumerate() {
                *x += (rng.random::<f64>() - 0.5) * g.width(axis);
            }
        }
        out.push(&p);
    }
    out
}

/// Draws `n` index pairs from a coupling; returns the x and y points.
pub fn sample_coupling<R: Rng + ?Sized>(c: &Coupling, n: usize, rng: &mut R) -> (Points, Points) {
    let cdf = cdf_of(c.weights());
    let total = *cdf.last().unwrap_or(&1.0);
    let mut xs = Points::empty(c.dim());
    let mut ys = Points::empty(c.y_support().dim());
    for _ in 0..n {
        let (i, j) = c.entry(draw_index(&cdf, rng.random::<f64>() * total));
        xs.push(c.x_support().row(i));
        ys.push(c.y_support().row(j));
    }
    (xs, ys)
}

/// Systematic resampling: `n` indices with a single uniform offset.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cdf = cdf_of(weights);
    let total = *cdf.last().unwrap_or(&1.0);
    let u0: f64 = rng.random();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let u = (i as f64 + u0) / n as f64 * total;
        while k + 1 < cdf.len() && cdf[k] <= u {
            k += 1;
        }
        out.push(k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;

    fn atoms(xs: &[f64]) -> Points {
        Points::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[0.0, 0.0]), Err(Error::ZeroMass));
        assert_eq!(normalize(&[1.0, -1.0]), Err(Error::InvalidWeights));
    }

    #[test]
    fn marginals_of_two_by_two() {
        let mu = DiscreteMeasure::uniform(atoms(&[0.0, 1.0])).unwrap();
        let lw = [0.1f64, 0.2, 0.3, 0.4].iter().map(|w| w.ln()).collect();
        let c = Coupling::table(&mu, &mu, lw).unwrap();
        let (a, b) = marginals(&c).unwrap();
        assert!((a.weights()[0] - 0.3).abs() < 1e-15 && (a.weights()[1] - 0.7).abs() < 1e-15);
        assert!((b.weights()[0] - 0.4).abs() < 1e-15 && (b.weights()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn product_marginals_are_exact() {
        let mu = DiscreteMeasure::particles(atoms(&[0.0, 1.0, 2.0]), &[0.2, 0.5, 0.3]).unwrap();
        let nu = DiscreteMeasure::particles(atoms(&[5.0, 6.0]), &[0.9, 0.1]).unwrap();
        let (a, b) = marginals(&Coupling::product(&mu, &nu).unwrap()).unwrap();
        for (x, y) in a.weights().iter().zip(mu.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in b.weights().iter().zip(nu.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn tv_examples() {
        let p = DiscreteMeasure::particles(atoms(&[0.0, 1.0]), &[0.5, 0.5]).unwrap();
        let q = DiscreteMeasure::particles(atoms(&[0.0, 1.0]), &[0.7, 0.3]).unwrap();
        assert!((tv_distance(&p, &q).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let r = DiscreteMeasure::uniform(atoms(&[0.0, 2.0])).unwrap();
        assert!(tv_distance(&p, &r).is_err());
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[0.5, 0.5, 0.0]).unwrap(), 2.0);
        assert_eq!(ess(&[0.25; 4]).unwrap(), 4.0);
        assert_eq!(ess(&[0.0, 0.0]), Err(Error::ZeroMass));
    }

    #[test]
    fn sampling_frequencies() {
        let m = DiscreteMeasure::uniform(atoms(&[0.0, 1.0])).unwrap();
        let s = sample(&m, 100_000, &mut rng(7, 0));
        let frac = s.as_slice().iter().filter(|&&x| x == 0.0).count() as f64 / 1e5;
        assert!((frac - 0.5).abs() < 0.01);
        let d = DiscreteMeasure::particles(atoms(&[3.0, 4.0]), &[1.0, 0.0]).unwrap();
        assert!(sample(&d, 50, &mut rng(1, 0)).as_slice().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn grid_centers_are_row_major() {
        let g = GridSpec::new(vec![[0.0, 2.0], [0.0, 4.0]], 2).unwrap();
        let c = g.centers();
        assert_eq!(c.to_rows(), vec![vec![0.5, 1.0], vec![0.5, 3.0], vec![1.5, 1.0], vec![1.5, 3.0]]);
    }

    #[test]
    fn systematic_resampling_counts() {
        let idx = systematic_resample(&[0.5, 0.25, 0.25], 4, &mut rng(3, 0));
        let zeros = idx.iter().filter(|&&i| i == 0).count();
        assert_eq!(zeros, 2);
        assert_eq!(idx.len(), 4);
    }
}
