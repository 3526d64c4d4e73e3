//! Run configuration: a versioned JSON document with strict key checking,
//! plus `--dotted.key value` overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use taco_core::flow_sampler::BridgeConfig;
use taco_core::geometry::{TaskName, TaskSpec};
use taco_core::marginal_path::Pairing;
use taco_core::metrics::{MetricConfig, MmdEstimator};
use taco_core::tilting::TiltConfig;

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Particle,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCost {
    /// `|T(x) - y|^2` with the task's ground-truth map.
    Latent,
    SquaredEuclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub task: TaskSpec,
    pub algorithm: AlgorithmConfig,
    pub oracle: OracleConfig,
    pub oneshot: OneshotConfig,
    pub metrics: MetricsConfig,
    pub convergence: ConvergenceConfig,
    pub check: CheckConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Number of outer steps `N`; the step size is `1 / N`.
    pub outer_steps: usize,
    /// Fraction of the cloud held as particle slots.
    pub alpha: f64,
    pub mode: Mode,
    pub pairing: Pairing,
    /// Resample the flow portion when its ESS falls below this fraction.
    pub ess_threshold: f64,
    pub tilt: TiltConfig,
    pub bridge: BridgeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    /// Entropic regularisation of the reference and oracle plans; the task default when absent.
    pub epsilon: Option<f64>,
    pub cost: OracleCost,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneshotConfig {
    /// Reference-plan entries below `support_floor * max` count as outside the support.
    pub support_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub n_projections: usize,
    pub seed: u64,
    pub mmd_estimator: MmdEstimator,
    pub bandwidth: Option<f64>,
    pub sinkhorn_epsilon: f64,
    /// Sources transported for the per-iteration rows.
    pub track_samples: usize,
    /// Sources transported for the first and last rows.
    pub eval_samples: usize,
    /// Write wall-clock milliseconds into the records; off gives byte-stable output.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Outer step counts `N`, i.e. `delta = 1 / N`.
    pub steps: Vec<usize>,
    pub s_probe: f64,
    pub probes: Vec<f64>,
    pub sigma: f64,
    pub sinkhorn_tol: f64,
    pub gs_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub max_map_rmse: f64,
    pub min_rmse_reduction: f64,
    pub max_sw2: f64,
    pub max_grid_tv: f64,
    pub slope_range: [f64; 2],
    pub ratio_range: [f64; 2],
    pub max_oneshot_coverage: f64,
    pub min_oneshot_tv: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            output_dir: PathBuf::from("runs/default"),
            task: TaskSpec::default(),
            algorithm: AlgorithmConfig::default(),
            oracle: OracleConfig::default(),
            oneshot: OneshotConfig::default(),
            metrics: MetricsConfig::default(),
            convergence: ConvergenceConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            outer_steps: 50,
            alpha: 0.2,
            mode: Mode::Particle,
            pairing: Pairing::GreedyStandardized,
            ess_threshold: 0.5,
            tilt: TiltConfig::default(),
            bridge: BridgeConfig::default(),
        }
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { enabled: true, epsilon: None, cost: OracleCost::Latent, tol: 1e-10, max_iter: 1_000_000 }
    }
}

impl Default for OneshotConfig {
    fn default() -> Self {
        Self { support_floor: 1e-12, tol: 1e-10, max_iter: 2_000 }
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let m = MetricConfig::default();
        Self {
            n_projections: m.n_projections,
            seed: m.seed,
            mmd_estimator: m.mmd_estimator,
            bandwidth: m.bandwidth,
            sinkhorn_epsilon: m.sinkhorn_epsilon,
            track_samples: 128,
            eval_samples: 1024,
            timing: true,
        }
    }
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            steps: vec![10, 20, 40, 80, 160],
            s_probe: 0.5,
            probes: (0..7).map(|i| -1.5 + 0.5 * i as f64).collect(),
            sigma: 0.1,
            sinkhorn_tol: 1e-13,
            gs_tol: 1e-12,
        }
    }
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            max_map_rmse: 1.4,
            min_rmse_reduction: 0.95,
            max_sw2: 0.15,
            max_grid_tv: 0.05,
            slope_range: [-1.35, -0.65],
            ratio_range: [1.6, 2.4],
            max_oneshot_coverage: 0.01,
            min_oneshot_tv: 0.5,
        }
    }
}

impl MetricsConfig {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            n_projections: self.n_projections,
            seed: self.seed,
            mmd_estimator: self.mmd_estimator,
            bandwidth: self.bandwidth,
            sinkhorn_epsilon: self.sinkhorn_epsilon,
        }
    }
}

impl RunConfig {
    pub fn delta(&self) -> f64 {
        1.0 / self.algorithm.outer_steps as f64
    }

    pub fn epsilon(&self) -> f64 {
        self.oracle.epsilon.unwrap_or_else(|| self.task.name.default_epsilon())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(RunError::Config(format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version)));
        }
        if self.task.n_reference < 2 || self.task.n_new < 2 {
            return bad("task: n_reference and n_new must be at least 2");
        }
        let a = &self.algorithm;
        if a.outer_steps < 1 {
            return bad("algorithm.outer_steps must be at least 1");
        }
        if !(0.0..=1.0).contains(&a.alpha) {
            return bad("algorithm.alpha must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&a.ess_threshold) {
            return bad("algorithm.ess_threshold must lie in [0, 1]");
        }
        if !(a.tilt.gs_tol > 0.0) || a.tilt.gs_max_sweeps == 0 {
            return bad("algorithm.tilt: gs_tol must be positive and gs_max_sweeps nonzero");
        }
        a.bridge.validate().map_err(|e| RunError::Config(format!("algorithm.bridge: {e}")))?;
        if a.mode == Mode::Particle && self.task.n_reference != self.task.n_new {
            return bad("particle mode pairs reference and new samples one to one: n_reference must equal n_new");
        }
        if a.mode == Mode::Grid {
            if a.alpha != 0.0 {
                return bad("algorithm.alpha must be 0 in grid mode (particle slots need a pair cloud)");
            }
            if self.task.name.default_grid(self.task.resolution).is_none() {
                return Err(RunError::Config(format!("task {} has no grid variant", self.task.name.as_str())));
            }
        }
        if !(self.epsilon() > 0.0) {
            return bad("oracle.epsilon must be positive");
        }
        if !(self.oneshot.support_floor > 0.0 && self.oneshot.support_floor < 1.0) {
            return bad("oneshot.support_floor must lie in (0, 1)");
        }
        let m = &self.metrics;
        if m.n_projections < 8 {
            return bad("metrics.n_projections must be at least 8");
        }
        if m.track_samples == 0 || m.eval_samples == 0 {
            return bad("metrics: track_samples and eval_samples must be positive");
        }
        if m.bandwidth.is_some_and(|h| !(h > 0.0)) || !(m.sinkhorn_epsilon > 0.0) {
            return bad("metrics: bandwidth and sinkhorn_epsilon must be positive");
        }
        let c = &self.convergence;
        if c.steps.is_empty() || c.steps.contains(&0) {
            return bad("convergence.steps must be a nonempty list of positive step counts");
        }
        if !(c.s_probe > 0.0 && c.s_probe < 1.0) || c.probes.is_empty() || !(c.sigma > 0.0) {
            return bad("convergence: s_probe in (0, 1), at least one probe and sigma > 0 are required");
        }
        Ok(())
    }
}

/// Reads a config file (or the defaults when `path` is `None`), applies the
/// overrides and validates the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, RunError> {
    let pairs = parse_overrides(overrides)?;
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?
        }
        None => {
            // Task-specific defaults follow a task named on the command line.
            let base = pairs.iter().find(|(k, _)| k == "task.name").map(|(_, v)| serde_json::from_value::<TaskName>(v.clone()));
            let base = match base {
                Some(Ok(name)) => for_task(name),
                Some(Err(e)) => return Err(RunError::Config(format!("task.name: {e}"))),
                None => RunConfig::default(),
            };
            serde_json::to_value(base).expect("default config serialises")
        }
    };
    for (key, value) in pairs {
        set_path(&mut doc, &key, value)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| {
        let origin = path.map(|p| p.display().to_string()).unwrap_or_else(|| "overrides".into());
        RunError::Config(format!("{origin}: {e}"))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Splits `--a.b value` and `--a.b=value` arguments into key/value pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, Value)>, RunError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg.strip_prefix("--").ok_or_else(|| RunError::Config(format!("expected --key value, found `{arg}`")))?;
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| RunError::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        out.push((key, value));
    }
    Ok(out)
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), RunError> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(RunError::Config(format!("--{key}: empty key segment")));
        }
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node.as_object_mut().ok_or_else(|| RunError::Config(format!("--{key}: `{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Convenience for tests and the acceptance harness.
pub fn for_task(name: TaskName) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.task.name = name;
    if name == TaskName::Gaussian1dGrid {
        cfg.algorithm.mode = Mode::Grid;
        cfg.algorithm.alpha = 0.0;
        cfg.oracle.cost = OracleCost::SquaredEuclidean;
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        for_task(TaskName::Gaussian1dGrid).validate().unwrap();
    }

    #[test]
    fn overrides_apply() {
        let cfg = load(None, &args(&["--algorithm.alpha", "0.3", "--task.name=medium", "--algorithm.bridge.sigma", "0.2"])).unwrap();
        assert_eq!(cfg.algorithm.alpha, 0.3);
        assert_eq!(cfg.task.name, TaskName::Medium);
        assert_eq!(cfg.algorithm.bridge.sigma, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = load(None, &args(&["--algorithm.alhpa", "0.3"])).unwrap_err();
        assert!(e.to_string().contains("alhpa"), "{e}");
    }

    #[test]
    fn grid_mode_needs_zero_alpha() {
        let e = load(None, &args(&["--algorithm.mode", "grid"])).unwrap_err();
        assert!(matches!(e, RunError::Config(_)));
        load(None, &args(&["--algorithm.mode", "grid", "--algorithm.alpha", "0"])).unwrap();
    }

    #[test]
    fn version_is_checked() {
        assert!(load(None, &args(&["--schema_version", "2"])).is_err());
    }

    #[test]
    fn dangling_key_is_an_error() {
        assert!(parse_overrides(&args(&["--task.seed"])).is_err());
        assert!(parse_overrides(&args(&["task.seed", "1"])).is_err());
    }
}
