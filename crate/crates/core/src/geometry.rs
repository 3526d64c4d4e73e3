//! Benchmark tasks: reference and new marginals, ground-truth maps and
//! perturbations.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure, GridSpec, Points};
use crate::rng::{rng, STREAM_TASK};
use crate::sinkhorn::{self, CostSpec, SinkhornConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskName {
    Simple,
    Medium,
    Complex,
    Moon,
    Circle,
    RadialWarp,
    PolarTwist,
    #[cfg_attr(feature = "serde", serde(rename = "gaussian_1d_grid"))]
    Gaussian1dGrid,
}

impl TaskName {
    pub const ALL: [TaskName; 8] = [
        TaskName::Simple,
        TaskName::Medium,
        TaskName::Complex,
        TaskName::Moon,
        TaskName::Circle,
        TaskName::RadialWarp,
        TaskName::PolarTwist,
        TaskName::Gaussian1dGrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::Simple => "simple",
            TaskName::Medium => "medium",
            TaskName::Complex => "complex",
            TaskName::Moon => "moon",
            TaskName::Circle => "circle",
            TaskName::RadialWarp => "radial_warp",
            TaskName::PolarTwist => "polar_twist",
            TaskName::Gaussian1dGrid => "gaussian_1d_grid",
        }
    }

    pub fn dim(&self) -> usize {
        if *self == TaskName::Gaussian1dGrid {
            1
        } else {
            2
        }
    }

    /// Default grid box for grid-mode instances of the task.
    pub fn default_grid(&self, resolution: usize) -> Option<GridSpec> {
        let b = match self {
            TaskName::Gaussian1dGrid => vec![[-3.0, 3.0]],
            TaskName::Simple => vec![[-12.0, 12.0]; 2],
            TaskName::Medium => vec![[-8.0, 8.0]; 2],
            TaskName::Complex => vec![[-14.0, 14.0]; 2],
            _ => return None,
        };
        GridSpec::new(b, resolution).ok()
    }

    /// Default entropic regularisation `0.05 L^2` with a per-task length scale `L`.
    pub fn default_epsilon(&self) -> f64 {
        let l: f64 = match self {
            TaskName::Gaussian1dGrid => 10.0f64.sqrt(),
            TaskName::Simple => 4.0,
            TaskName::Medium => 3.0,
            TaskName::Complex => 6.0,
            _ => 1.0,
        };
        0.05 * l * l
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TaskSpec {
    pub name: TaskName,
    /// Number of reference pairs drawn from the reference coupling.
    pub n_reference: usize,
    /// Number of samples drawn from each new marginal.
    pub n_new: usize,
    /// Standard deviation of the Gaussian noise added to `T(x)` in reference pairs.
    pub coupling_noise: f64,
    pub seed: u64,
    pub perturbed: bool,
    /// Bins per axis for grid tasks.
    pub resolution: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self { name: TaskName::Simple, n_reference: 4096, n_new: 4096, coupling_noise: 0.1, seed: 0, perturbed: false, resolution: 32 }
    }
}

/// Isotropic Gaussian component.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub components: Vec<Component>,
}

impl Mixture {
    pub fn new(components: Vec<Component>) -> Self {
        Self { components }
    }

    pub fn single(mean: Vec<f64>, std: f64) -> Self {
        Self::new(vec![Component { weight: 1.0, mean, std }])
    }

    pub fn equal(means: &[Vec<f64>], std: f64) -> Self {
        let w = 1.0 / means.len() as f64;
        Self::new(means.iter().map(|m| Component { weight: w, mean: m.clone(), std }).collect())
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let mut terms = [0.0f64; 16];
        let mut big = Vec::new();
        let logs = if self.components.len() <= 16 {
            &mut terms[..self.components.len()]
        } else {
            big.resize(self.components.len(), 0.0);
            &mut big[..]
        };
        for (t, c) in logs.iter_mut().zip(&self.components) {
            let r2 = crate::math::sq_dist(x, &c.mean);
            *t = c.weight.ln() - 0.5 * r2 / (c.std * c.std) - d * (c.std.ln() + 0.5 * (2.0 * PI).ln());
        }
        crate::math::logsumexp(logs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Points {
        let d = self.dim();
        let mut out = Points::empty(d);
        let mut p = vec![0.0; d];
        for _ in 0..n {
            let mut u: f64 = rng.random();
            let mut k = self.components.len() - 1;
            for (i, c) in self.components.iter().enumerate() {
                if u < c.weight {
                    k = i;
                    break;
                }
                u -= c.weight;
            }
            let c = &self.components[k];
            for (pi, m) in p.iter_mut().zip(&c.mean) {
                let z: f64 = rng.sample(StandardNormal);
                *pi = m + c.std * z;
            }
            out.push(&p);
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for c in &self.components {
            m.iter_mut().zip(&c.mean).for_each(|(a, b)| *a += c.weight * b);
        }
        m
    }

    /// Image under `x -> s R x + shift` (rotation/scaling keep components isotropic).
    pub fn affine(&self, f: impl Fn(&[f64]) -> Vec<f64>, scale: f64) -> Mixture {
        Mixture::new(self.components.iter().map(|c| Component { weight: c.weight, mean: f(&c.mean), std: c.std * scale }).collect())
    }
}

/// Analytic descriptions of the four marginals, when they are Gaussian mixtures.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalModels {
    pub mu_ref: Mixture,
    pub nu_ref: Mixture,
    pub mu_new: Mixture,
    pub nu_new: Mixture,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruthMap {
    Negation,
    Rotation {
        angle: f64,
    },
    RadialWarp {
        k: f64,
    },
    PolarTwist,
    /// Moves the upper half of a circle up and the lower half down.
    SemicircleSplit {
        center: Vec<f64>,
        shift: f64,
    },
    Identity,
}

impl GroundTruthMap {
    pub fn name(&self) -> String {
        match self {
            GroundTruthMap::Negation => "negation".into(),
            GroundTruthMap::Rotation { angle } => format!("rotation({:.0}deg)", angle.to_degrees()),
            GroundTruthMap::RadialWarp { .. } => "radial_warp".into(),
            GroundTruthMap::PolarTwist => "polar_twist".into(),
            GroundTruthMap::SemicircleSplit { .. } => "semicircle_split".into(),
            GroundTruthMap::Identity => "identity".into(),
        }
    }
}

pub fn apply_map(map: &GroundTruthMap, x: &[f64]) -> Vec<f64> {
    match map {
        GroundTruthMap::Negation => x.iter().map(|v| -v).collect(),
        GroundTruthMap::Rotation { angle } => rotate(x, *angle),
        GroundTruthMap::RadialWarp { k } => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            x.iter().map(|v| v * (1.0 + k * r2)).collect()
        }
        GroundTruthMap::PolarTwist => {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let th = x[1].atan2(x[0]) + r.sin();
            vec![r * th.cos(), r * th.sin()]
        }
        GroundTruthMap::SemicircleSplit { center, shift } => {
            let s = if x[1] >= center[1] { *shift } else { -*shift };
            vec![x[0], x[1] + s]
        }
        GroundTruthMap::Identity => x.to_vec(),
    }
}

pub fn apply_map_points(map: &GroundTruthMap, xs: &Points) -> Points {
    xs.map(|p| apply_map(map, p))
}

fn rotate(x: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Rotation of a 2D point about `center`.
pub fn rotate_about(x: &[f64], center: &[f64], angle: f64) -> Vec<f64> {
    let d = [x[0] - center[0], x[1] - center[1]];
    let r = rotate(&d, angle);
    vec![r[0] + center[0], r[1] + center[1]]
}

/// Everything a transfer run needs about one task instance.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub spec: TaskSpec,
    /// Samples `(x', T(x') + noise)` of the reference coupling, or the
    /// reference EOT plan itself for grid tasks.
    pub reference: Coupling,
    pub mu_new: DiscreteMeasure,
    pub nu_new: DiscreteMeasure,
    pub map: Option<GroundTruthMap>,
    pub models: Option<MarginalModels>,
}

impl TaskData {
    pub fn ground_truth(&self) -> Result<&GroundTruthMap> {
        self.map.as_ref().ok_or_else(|| Error::NoGroundTruth(self.spec.name.as_str().into()))
    }

    /// Latent cost `|T(x) - y|^2` under which the ground-truth map is optimal.
    pub fn latent_cost(&self, xs: &Points, ys: &Points) -> Result<CostSpec> {
        let map = self.ground_truth()?;
        let tx = apply_map_points(map, xs);
        Ok(CostSpec::Matrix(sinkhorn::cost_matrix(&tx, ys, &CostSpec::SquaredEuclidean)?))
    }
}

struct Layout2d {
    mu_ref: Mixture,
    mu_new: Mixture,
    map: Option<GroundTruthMap>,
}

fn blob_layout(name: TaskName) -> Option<Layout2d> {
    let deg = PI / 180.0;
    Some(match name {
        TaskName::Simple => Layout2d {
            mu_ref: Mixture::single(vec![0.0, 0.0], 0.5),
            mu_new: Mixture::single(vec![-10.0, -10.0], 0.5),
            map: Some(GroundTruthMap::Negation),
        },
        TaskName::Medium => Layout2d {
            mu_ref: Mixture::equal(&[vec![-2.0, 0.0], vec![2.0, 0.0]], 0.5),
            mu_new: Mixture::equal(&[vec![-5.0, -5.0], vec![-5.0, 5.0], vec![5.0, -5.0], vec![5.0, 5.0]], 0.5),
            map: Some(GroundTruthMap::Rotation { angle: 60.0 * deg }),
        },
        TaskName::Complex => {
            let arm = 1.5;
            let cross = |a: f64| [vec![0.0, 0.0], vec![a, 0.0], vec![-a, 0.0], vec![0.0, a], vec![0.0, -a]];
            Layout2d {
                mu_ref: Mixture::equal(&cross(arm), 0.3),
                mu_new: Mixture::equal(&cross(6.7 * arm), 0.3 * 6.7),
                map: Some(GroundTruthMap::Rotation { angle: 45.0 * deg }),
            }
        }
        TaskName::RadialWarp => Layout2d {
            mu_ref: Mixture::equal(&[vec![-0.5, 0.0], vec![0.5, 0.0]], 0.1),
            mu_new: Mixture::equal(&[vec![0.0, -0.9], vec![0.0, 0.9]], 0.15),
            map: Some(GroundTruthMap::RadialWarp { k: 0.5 }),
        },
        TaskName::PolarTwist => Layout2d {
            mu_ref: Mixture::equal(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 0.2),
            mu_new: Mixture::equal(&[vec![0.0, 2.5], vec![0.0, -2.5]], 0.3),
            map: Some(GroundTruthMap::PolarTwist),
        },
        _ => return None,
    })
}

fn noisy_image<R: Rng + ?Sized>(map: &GroundTruthMap, xs: &Points, noise: f64, rng: &mut R) -> Points {
    let mut out = Points::empty(xs.dim());
    for p in xs.iter() {
        let mut y = apply_map(map, p);
        for v in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise * z;
        }
        out.push(&y);
    }
    out
}

fn circle_points<R: Rng + ?Sized>(center: &[f64], radius: f64, n: usize, rng: &mut R) -> Points {
    let mut out = Points::empty(2);
    for _ in 0..n {
        let th = 2.0 * PI * rng.random::<f64>();
        let z: f64 = rng.sample(StandardNormal);
        let r = radius + 0.05 * z;
        out.push(&[center[0] + r * th.cos(), center[1] + r * th.sin()]);
    }
    out
}

fn moon_pair<R: Rng + ?Sized>(rng: &mut R, rot: f64, shift: [f64; 2], noise: f64) -> ([f64; 2], [f64; 2]) {
    let th = PI * rng.random::<f64>();
    let mut jitter = || -> f64 { noise * rng.sample::<f64, _>(StandardNormal) };
    let upper = [th.cos() + jitter(), th.sin() + jitter()];
    let lower = [1.0 - th.cos() + jitter(), 0.5 - th.sin() + jitter()];
    let place = |p: [f64; 2]| {
        let r = rotate(&p, rot);
        [r[0] + shift[0], r[1] + shift[1]]
    };
    (place(upper), place(lower))
}

/// 1D mixture endpoints of the grid task: (mu', nu', mu, nu).
pub fn gaussian_1d_models() -> MarginalModels {
    let c = |w: f64, m: f64, s: f64| Component { weight: w, mean: vec![m], std: s };
    MarginalModels {
        mu_ref: Mixture::new(vec![c(0.5, -0.8, 0.5), c(0.5, -0.2, 0.6)]),
        nu_ref: Mixture::new(vec![c(0.5, 0.0, 0.55), c(0.5, 0.5, 0.5)]),
        mu_new: Mixture::new(vec![c(0.3, -1.2, 0.45), c(0.7, 0.9, 0.5)]),
        nu_new: Mixture::new(vec![c(0.6, -0.3, 0.6), c(0.4, 1.3, 0.4)]),
    }
}

/// Discretises a mixture on a grid by cell-centre density values.
pub fn grid_measure(m: &Mixture, grid: &GridSpec) -> Result<DiscreteMeasure> {
    DiscreteMeasure::grid_from_log_density(grid.clone(), |x| m.log_density(x))
}

pub fn make_task(spec: &TaskSpec) -> Result<TaskData> {
    let mut r = rng(spec.seed, STREAM_TASK);
    let (n_ref, n_new, noise) = (spec.n_reference, spec.n_new, spec.coupling_noise);
    let data = match spec.name {
        TaskName::Gaussian1dGrid => {
            let models = gaussian_1d_models();
            let grid = spec.name.default_grid(spec.resolution).ok_or(Error::InvalidConfig("grid".into()))?;
            let mu_ref = grid_measure(&models.mu_ref, &grid)?;
            let nu_ref = grid_measure(&models.nu_ref, &grid)?;
            let cfg = SinkhornConfig { epsilon: spec.name.default_epsilon(), ..Default::default() };
            let plan = sinkhorn::solve(&mu_ref, &nu_ref, &CostSpec::SquaredEuclidean, &cfg)?.plan;
            TaskData {
                spec: spec.clone(),
                reference: plan,
                mu_new: grid_measure(&models.mu_new, &grid)?,
                nu_new: grid_measure(&models.nu_new, &grid)?,
                map: Some(GroundTruthMap::Identity),
                models: Some(models),
            }
        }
        TaskName::Moon => {
            let mut xs = Points::empty(2);
            let mut ys = Points::empty(2);
            for _ in 0..n_ref {
                let (x, y) = moon_pair(&mut r, 0.0, [0.0, 0.0], 0.05);
                xs.push(&x);
                ys.push(&y);
            }
            let mut mu = Points::empty(2);
            let mut nu = Points::empty(2);
            for _ in 0..n_new {
                mu.push(&moon_pair(&mut r, PI / 2.0, [4.0, 0.0], 0.05).0);
            }
            for _ in 0..n_new {
                nu.push(&moon_pair(&mut r, PI / 2.0, [4.0, 0.0], 0.05).1);
            }
            TaskData {
                spec: spec.clone(),
                reference: Coupling::uniform_pairs(xs, ys)?,
                mu_new: DiscreteMeasure::uniform(mu)?,
                nu_new: DiscreteMeasure::uniform(nu)?,
                map: None,
                models: None,
            }
        }
        TaskName::Circle => {
            let ref_map = GroundTruthMap::SemicircleSplit { center: vec![8.0, -1.0], shift: 5.0 };
            let map = GroundTruthMap::SemicircleSplit { center: vec![0.0, 0.0], shift: 5.0 };
            let xs = circle_points(&[8.0, -1.0], 2.0, n_ref, &mut r);
            let ys = noisy_image(&ref_map, &xs, noise, &mut r);
            let mu = circle_points(&[0.0, 0.0], 3.0, n_new, &mut r);
            let nu_src = circle_points(&[0.0, 0.0], 3.0, n_new, &mut r);
            let nu = apply_map_points(&map, &nu_src);
            TaskData {
                spec: spec.clone(),
                reference: Coupling::uniform_pairs(xs, ys)?,
                mu_new: DiscreteMeasure::uniform(mu)?,
                nu_new: DiscreteMeasure::uniform(nu)?,
                map: Some(map),
                models: None,
            }
        }
        name => {
            let lay = blob_layout(name).ok_or_else(|| Error::UnknownTask(name.as_str().into()))?;
            let map = lay.map.clone().ok_or_else(|| Error::NoGroundTruth(name.as_str().into()))?;
            let xs = lay.mu_ref.sample(n_ref, &mut r);
            let ys = noisy_image(&map, &xs, noise, &mut r);
            let mu = lay.mu_new.sample(n_new, &mut r);
            let nu_src = lay.mu_new.sample(n_new, &mut r);
            let nu = apply_map_points(&map, &nu_src);
            let models = match map {
                GroundTruthMap::Negation | GroundTruthMap::Rotation { .. } => Some(MarginalModels {
                    nu_ref: lay.mu_ref.affine(|m| apply_map(&map, m), 1.0),
                    nu_new: lay.mu_new.affine(|m| apply_map(&map, m), 1.0),
                    mu_ref: lay.mu_ref,
                    mu_new: lay.mu_new,
                }),
                _ => None,
            };
            TaskData {
                spec: spec.clone(),
                reference: Coupling::uniform_pairs(xs, ys)?,
                mu_new: DiscreteMeasure::uniform(mu)?,
                nu_new: DiscreteMeasure::uniform(nu)?,
                map: Some(map),
                models,
            }
        }
    };
    if spec.perturbed {
        let mut base = data;
        base.spec.perturbed = false;
        return perturb(&base);
    }
    Ok(data)
}

/// Rotates `nu_new` by +10 degrees about its centroid (Simple: shifts it by +2
/// per axis; the 1D grid task: by +0.25). The ground-truth map is dropped.
pub fn perturb(task: &TaskData) -> Result<TaskData> {
    if task.spec.perturbed {
        return Err(Error::AlreadyPerturbed);
    }
    let name = task.spec.name;
    let centroid = task.nu_new.mean();
    let angle = 10.0f64.to_radians();
    let moved = move |p: &[f64]| -> Vec<f64> {
        match name {
            TaskName::Simple => p.iter().map(|v| v + 2.0).collect(),
            TaskName::Gaussian1dGrid => vec![p[0] + 0.25],
            _ => rotate_about(p, &centroid, angle),
        }
    };
    let mut out = task.clone();
    out.spec.perturbed = true;
    out.map = None;
    if let Some(models) = &mut out.models {
        let c = models.nu_new.mean();
        models.nu_new = models.nu_new.affine(
            |m| match name {
                TaskName::Simple => m.iter().map(|v| v + 2.0).collect(),
                TaskName::Gaussian1dGrid => vec![m[0] + 0.25],
                _ => rotate_about(m, &c, angle),
            },
            1.0,
        );
    }
    out.nu_new = match task.nu_new.grid() {
        Some(g) => grid_measure(&out.models.as_ref().ok_or(Error::OutOfFamily("grid tasks without models"))?.nu_new, g)?,
        None => DiscreteMeasure::uniform(task.nu_new.points().map(moved))?,
    };
    Ok(out)
}
