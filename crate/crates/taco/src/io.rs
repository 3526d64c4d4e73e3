//! JSON artifacts: measures, couplings, tilt rates, task sidecars and run manifests.
//!
//! Measures are written as
//! `{"mode", "dim", "points" | ("bounds", "resolution"), "weights", "log_weights"}`.
//! Couplings use the same keys per side (`x_*`, `y_*`). Log-weights are
//! written next to the linear ones because grid tails underflow `f64`; the
//! loader prefers them when present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taco_core::geometry::{TaskData, TaskSpec};
use taco_core::measures::{Coupling, DiscreteMeasure, GridSpec, Layout, Points, Support};
use taco_core::tilting::TiltRates;

use crate::config::RunConfig;
use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Particle,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureJson {
    pub mode: ModeTag,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingJson {
    pub mode: ModeTag,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_resolution: Option<usize>,
    /// Pair weights, or the `n_x * n_y` table in row-major order.
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_hint: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesJson {
    /// SHA-256 of the coupling supports the rates are tabulated on.
    pub support_hash: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskJson {
    pub spec: TaskSpec,
    pub map: Option<String>,
}

fn bad(msg: impl Into<String>) -> RunError {
    RunError::Format(msg.into())
}

fn points_from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Points, RunError> {
    Points::from_rows(dim, rows).map_err(|e| bad(format!("points: {e}")))
}

pub fn measure_to_json(m: &DiscreteMeasure) -> MeasureJson {
    let mut out = MeasureJson {
        mode: ModeTag::Particle,
        dim: m.dim(),
        points: None,
        bounds: None,
        resolution: None,
        weights: m.weights().to_vec(),
        log_weights: Some(m.log_weights().to_vec()),
    };
    match m.support() {
        Support::Particle => out.points = Some(m.points().to_rows()),
        Support::Grid(g) => {
            out.mode = ModeTag::Grid;
            out.bounds = Some(g.bounds.clone());
            out.resolution = Some(g.resolution);
        }
    }
    out
}

fn check_weights(w: &[f64], lw: Option<&Vec<f64>>, n: usize) -> Result<(), RunError> {
    if w.len() != n {
        return Err(bad(format!("expected {n} weights, found {}", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(bad("weights must be finite and nonnegative"));
    }
    if let Some(lw) = lw {
        if lw.len() != n || lw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(bad("log_weights must match the weights"));
        }
    }
    Ok(())
}

fn grid_of(bounds: &Option<Vec<[f64; 2]>>, res: Option<usize>, dim: usize) -> Result<GridSpec, RunError> {
    let b = bounds.clone().ok_or_else(|| bad("grid mode needs bounds"))?;
    let r = res.ok_or_else(|| bad("grid mode needs a resolution"))?;
    if b.len() != dim {
        return Err(bad(format!("bounds describe {} axes but dim is {dim}", b.len())));
    }
    GridSpec::new(b, r).map_err(|e| bad(format!("grid: {e}")))
}

pub fn measure_from_json(j: &MeasureJson) -> Result<DiscreteMeasure, RunError> {
    let (points, support) = match j.mode {
        ModeTag::Particle => {
            let rows = j.points.as_ref().ok_or_else(|| bad("particle mode needs points"))?;
            (points_from_rows(j.dim, rows)?, Support::Particle)
        }
        ModeTag::Grid => {
            let g = grid_of(&j.bounds, j.resolution, j.dim)?;
            (g.centers(), Support::Grid(g))
        }
    };
    check_weights(&j.weights, j.log_weights.as_ref(), points.len())?;
    let r = match &j.log_weights {
        Some(lw) => DiscreteMeasure::from_log_weights(points, lw.clone(), support),
        None => DiscreteMeasure::new(points, &j.weights, support),
    };
    r.map_err(|e| bad(format!("measure: {e}")))
}

pub fn coupling_to_json(c: &Coupling) -> CouplingJson {
    let mut out = CouplingJson {
        mode: ModeTag::Particle,
        dim: c.dim(),
        x_points: None,
        y_points: None,
        x_bounds: None,
        x_resolution: None,
        y_bounds: None,
        y_resolution: None,
        weights: c.weights().to_vec(),
        log_weights: Some(c.log_weights().to_vec()),
        epsilon_hint: c.epsilon_hint(),
    };
    match (c.x_grid(), c.y_grid()) {
        (Some(gx), Some(gy)) => {
            out.mode = ModeTag::Grid;
            out.x_bounds = Some(gx.bounds.clone());
            out.x_resolution = Some(gx.resolution);
            out.y_bounds = Some(gy.bounds.clone());
            out.y_resolution = Some(gy.resolution);
        }
        _ => {
            out.x_points = Some(c.x_support().to_rows());
            out.y_points = Some(c.y_support().to_rows());
        }
    }
    out
}

pub fn coupling_from_json(j: &CouplingJson) -> Result<Coupling, RunError> {
    let c = match j.mode {
        ModeTag::Particle => {
            let xs = points_from_rows(j.dim, j.x_points.as_ref().ok_or_else(|| bad("particle coupling needs x_points"))?)?;
            let ys = points_from_rows(j.dim, j.y_points.as_ref().ok_or_else(|| bad("particle coupling needs y_points"))?)?;
            if xs.len() != ys.len() {
                return Err(bad("x_points and y_points differ in length"));
            }
            check_weights(&j.weights, j.log_weights.as_ref(), xs.len())?;
            match &j.log_weights {
                Some(lw) => Coupling::pairs_from_log(xs, ys, lw.clone()),
                None => Coupling::pairs(xs, ys, &j.weights),
            }
        }
        ModeTag::Grid => {
            let gx = grid_of(&j.x_bounds, j.x_resolution, j.dim)?;
            let gy = grid_of(&j.y_bounds, j.y_resolution, j.dim)?;
            let n = gx.n_cells() * gy.n_cells();
            check_weights(&j.weights, j.log_weights.as_ref(), n)?;
            let lw = match &j.log_weights {
                Some(lw) => lw.clone(),
                None => j.weights.iter().map(|w| w.ln()).collect(),
            };
            let mu = DiscreteMeasure::on_grid(gx.clone(), &vec![1.0; gx.n_cells()]).map_err(|e| bad(e.to_string()))?;
            let nu = DiscreteMeasure::on_grid(gy.clone(), &vec![1.0; gy.n_cells()]).map_err(|e| bad(e.to_string()))?;
            Coupling::table(&mu, &nu, lw)
        }
    };
    Ok(c.map_err(|e| bad(format!("coupling: {e}")))?.with_epsilon_hint(j.epsilon_hint))
}

/// SHA-256 over the layout, dimension and support coordinates of a coupling.
pub fn support_hash(c: &Coupling) -> String {
    let mut h = Sha256::new();
    h.update([matches!(c.layout(), Layout::Table) as u8]);
    h.update((c.dim() as u64).to_le_bytes());
    for side in [c.x_support(), c.y_support()] {
        h.update((side.len() as u64).to_le_bytes());
        for v in side.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn rates_to_json(c: &Coupling, r: &TiltRates) -> RatesJson {
    RatesJson { support_hash: support_hash(c), a: r.a.clone(), b: r.b.clone() }
}

/// Loads rates and checks that they were tabulated on the support of `c`.
pub fn rates_from_json(j: &RatesJson, c: &Coupling) -> Result<TiltRates, RunError> {
    if j.support_hash != support_hash(c) {
        return Err(bad("rates were tabulated on a different support"));
    }
    if j.a.len() != c.n_x() || j.b.len() != c.n_y() {
        return Err(bad("rate lengths do not match the coupling"));
    }
    Ok(TiltRates { a: j.a.clone(), b: j.b.clone() })
}

pub fn task_to_json(t: &TaskData) -> TaskJson {
    TaskJson { spec: t.spec.clone(), map: t.map.as_ref().map(|m| m.name()) }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub metrics_seed: u64,
    pub delta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub s_min: f64,
    pub euler_steps: usize,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, files: Vec<String>) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.clone(),
            seed: cfg.task.seed,
            metrics_seed: cfg.metrics.seed,
            delta: cfg.delta(),
            alpha: cfg.algorithm.alpha,
            sigma: cfg.algorithm.bridge.sigma,
            s_min: cfg.algorithm.bridge.s_min(),
            euler_steps: cfg.algorithm.bridge.euler_steps,
            files,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| bad(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RunError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}
