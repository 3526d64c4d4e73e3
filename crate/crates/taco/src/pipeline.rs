//! The experiments: coupling transfer in particle and grid mode, the
//! one-shot reweighting baseline, and the two step-size sweeps.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use taco_core::flow_sampler::{init_mixture, resample_flow, weighted_update, BetaEvaluator, BridgeConfig, LiftedState, ParticleSlots};
use taco_core::geometry::{make_task, GroundTruthMap, TaskData, TaskSpec};
use taco_core::marginal_path::{grid_forcing, interpolate, velocities, MixtureEnds, PairedEnds, PathSpec, Side};
use taco_core::math::{log_normalize, loglog_fit, logsumexp};
use taco_core::measures::{coupling_tv, ess, sample, sample_coupling, Coupling, DiscreteMeasure, GridSpec, Points};
use taco_core::metrics::{energy_distance, map_rmse, mmd_rbf, sinkhorn_div, sliced_wasserstein, MetricConfig};
use taco_core::rng::{rng, STREAM_RESAMPLE, STREAM_SAMPLE, STREAM_SLOTS};
use taco_core::sinkhorn::{cost_matrix, solve_matrix, CostSpec, DualPotentials, SinkhornConfig, SinkhornSolution};
use taco_core::tilting::{gauss_seidel, solve_rates_weak, tilt_step, Conditionals, TiltConfig, TiltRates, WeakForcing};
use taco_core::Error;

use crate::config::{Mode, OracleCost, RunConfig};
use crate::parallel::{par_map, transport};
use crate::report::{IterationRecord, SweepRow};
use crate::RunError;

pub struct TransferOutcome {
    pub records: Vec<IterationRecord>,
    /// Particle mode: evaluation sources paired with their transported
    /// images. Grid mode: the final tilted plan.
    pub final_coupling: Coupling,
    /// Grid mode: the rates of the last step, on the support of the plan they tilted.
    pub last_rates: Option<(Coupling, TiltRates)>,
}

pub fn run_transfer(cfg: &RunConfig) -> Result<TransferOutcome, RunError> {
    cfg.validate()?;
    match cfg.algorithm.mode {
        Mode::Particle => particle_transfer(cfg),
        Mode::Grid => grid_transfer(cfg),
    }
}

fn elapsed_ms(cfg: &RunConfig, start: &Instant) -> Option<f64> {
    cfg.metrics.timing.then(|| start.elapsed().as_secs_f64() * 1e3)
}

/// Draws `n` points of the coupling's x-side (weighted, with replacement).
fn coupling_x_sample(c: &Coupling, n: usize, seed: u64) -> Points {
    sample_coupling(c, n, &mut rng(seed, STREAM_SAMPLE)).0
}

struct Distances {
    sw2: f64,
    mmd: f64,
    energy: f64,
    sinkhorn: f64,
}

fn distances(p: &Points, q: &Points, m: &MetricConfig) -> taco_core::Result<Distances> {
    Ok(Distances {
        sw2: sliced_wasserstein(p, q, 2.0, m)?,
        mmd: mmd_rbf(p, q, m)?,
        energy: energy_distance(p, q)?,
        sinkhorn: sinkhorn_div(p, q, m)?,
    })
}

fn flow_ess(c: &Coupling, slots: &ParticleSlots) -> f64 {
    ess(&c.weights()[..slots.flow_len]).unwrap_or(0.0)
}

/// Sources and target samples shared by every particle-mode row.
struct ParticleEval<'a> {
    eval_sources: Points,
    track_sources: Points,
    eval_target: Points,
    track_target: Points,
    map: Option<&'a GroundTruthMap>,
}

#[allow(clippy::too_many_arguments)]
fn particle_row(
    k: usize,
    t: f64,
    c: &Coupling,
    slots: &ParticleSlots,
    path: &PathSpec,
    ev: &ParticleEval,
    full: bool,
    cfg: &RunConfig,
    start: &Instant,
) -> Result<(IterationRecord, Points, Points), RunError> {
    let m = cfg.metrics.metric_config();
    let (sources, target) = if full { (&ev.eval_sources, &ev.eval_target) } else { (&ev.track_sources, &ev.track_target) };
    let eval = BetaEvaluator::new(c);
    let moved = transport(&eval, sources, &cfg.algorithm.bridge).map_err(RunError::at(k))?;
    let d = distances(&moved, target, &m).map_err(RunError::at(k))?;
    let mu_t = interpolate(path, Side::Mu, t).map_err(RunError::at(k))?;
    let xs = coupling_x_sample(c, sources.len(), cfg.metrics.seed);
    let sw2_mu = sliced_wasserstein(&xs, &mu_t.points().head(sources.len()), 2.0, &m).map_err(RunError::at(k))?;
    let rmse = match ev.map {
        Some(map) => Some(map_rmse(sources, &moved, map).map_err(RunError::at(k))?),
        None => None,
    };
    let rec = IterationRecord {
        iter: k,
        t,
        sw2_nu: d.sw2,
        sw2_mu,
        map_rmse: rmse,
        sinkhorn_div: d.sinkhorn,
        mmd: d.mmd,
        energy_dist: d.energy,
        ess: flow_ess(c, slots),
        tv_to_oracle: None,
        wall_ms: elapsed_ms(cfg, start),
    };
    Ok((rec, sources.clone(), moved))
}

fn particle_transfer(cfg: &RunConfig) -> Result<TransferOutcome, RunError> {
    let task = make_task(&cfg.task)?;
    let reference = &task.reference;
    if reference.is_grid() {
        return Err(RunError::Config(format!("task {} has no particle variant", cfg.task.name.as_str())));
    }
    let a = &cfg.algorithm;
    let seed = cfg.task.seed;
    let path = PathSpec::LinearPairs {
        mu: PairedEnds::new(reference.x_support().clone(), task.mu_new.points(), a.pairing)?,
        nu: PairedEnds::new(reference.y_support().clone(), task.nu_new.points(), a.pairing)?,
    };
    let (ne, nt) = (cfg.metrics.eval_samples, cfg.metrics.track_samples);
    let ev = ParticleEval {
        eval_sources: task.mu_new.points().head(ne),
        track_sources: task.mu_new.points().head(nt),
        eval_target: task.nu_new.points().head(ne),
        track_target: task.nu_new.points().head(nt),
        map: task.map.as_ref(),
    };
    let n = a.outer_steps;
    let delta = cfg.delta();
    let (mut c, mut slots) = init_mixture(reference, a.alpha, &mut rng(seed, STREAM_SLOTS))?;
    let mut resample_rng = rng(seed, STREAM_RESAMPLE);
    let start = Instant::now();
    let mut records = Vec::with_capacity(n + 1);
    for k in 0..n {
        let t = k as f64 * delta;
        records.push(particle_row(k, t, &c, &slots, &path, &ev, k == 0, cfg, &start)?.0);
        let at = RunError::at(k);
        let mu_points = interpolate(&path, Side::Mu, t).map_err(&at)?.points().clone();
        let nu_points = interpolate(&path, Side::Nu, t).map_err(&at)?.points().clone();
        let mu_velocity = velocities(&path, Side::Mu, t).map_err(&at)?;
        let nu_velocity = velocities(&path, Side::Nu, t).map_err(&at)?;
        let forcing = WeakForcing { mu_points: &mu_points, mu_velocity: &mu_velocity, nu_points: &nu_points, nu_velocity: &nu_velocity };
        let (sol, _) = solve_rates_weak(&c, &forcing, &a.tilt).map_err(&at)?;
        if !sol.converged {
            return Err(at(Error::NoConvergence { iterations: sol.sweeps, residual: sol.residual_x }));
        }
        let (next, next_slots) = weighted_update(&c, &sol.rates, delta, a.alpha, &slots, &path, k).map_err(&at)?;
        c = next;
        slots = next_slots;
        if slots.flow_len > 0 && flow_ess(&c, &slots) < a.ess_threshold * slots.flow_len as f64 {
            c = resample_flow(&c, &slots, a.alpha, &mut resample_rng).map_err(&at)?;
        }
    }
    let (last, sources, moved) = particle_row(n, 1.0, &c, &slots, &path, &ev, true, cfg, &start)?;
    records.push(last);
    Ok(TransferOutcome { records, final_coupling: Coupling::uniform_pairs(sources, moved)?, last_rates: None })
}

/// Everything a grid experiment needs: the mixture path, the cost table and
/// the Sinkhorn settings shared by the reference and oracle plans.
pub struct GridSetup {
    pub task: TaskData,
    pub grid: GridSpec,
    pub path: PathSpec,
    pub cost: Vec<f64>,
    pub sinkhorn: SinkhornConfig,
}

impl GridSetup {
    pub fn new(cfg: &RunConfig, tol: f64) -> Result<Self, RunError> {
        let task = make_task(&cfg.task)?;
        let name = cfg.task.name.as_str();
        let models = task.models.clone().ok_or_else(|| RunError::Config(format!("task {name} has no marginal models for grid mode")))?;
        let grid =
            cfg.task.name.default_grid(cfg.task.resolution).ok_or_else(|| RunError::Config(format!("task {name} has no grid variant")))?;
        for (a, b) in [(&models.mu_ref, &models.mu_new), (&models.nu_ref, &models.nu_new)] {
            if a.components.len() != b.components.len() {
                return Err(RunError::Config(format!("task {name}: mixture endpoints differ in component count")));
            }
        }
        let path = PathSpec::GridMixture {
            mu: MixtureEnds { start: models.mu_ref.clone(), end: models.mu_new.clone() },
            nu: MixtureEnds { start: models.nu_ref.clone(), end: models.nu_new.clone() },
            grid: grid.clone(),
        };
        let centers = grid.centers();
        let cost = match cfg.oracle.cost {
            OracleCost::SquaredEuclidean => cost_matrix(&centers, &centers, &CostSpec::SquaredEuclidean)?,
            OracleCost::Latent => {
                // The perturbed variant drops the map, but the cost is the unperturbed one.
                let base = make_task(&TaskSpec { perturbed: false, n_reference: 2, n_new: 2, ..cfg.task.clone() })?;
                match base.latent_cost(&centers, &centers)? {
                    CostSpec::Matrix(m) => m,
                    other => cost_matrix(&centers, &centers, &other)?,
                }
            }
        };
        let sinkhorn = SinkhornConfig { epsilon: cfg.epsilon(), tol, max_iter: cfg.oracle.max_iter };
        Ok(Self { task, grid, path, cost, sinkhorn })
    }

    pub fn marginals(&self, t: f64) -> taco_core::Result<(DiscreteMeasure, DiscreteMeasure)> {
        Ok((interpolate(&self.path, Side::Mu, t)?, interpolate(&self.path, Side::Nu, t)?))
    }

    /// The EOT plan between the path marginals at `t`.
    pub fn exact(&self, t: f64, warm: Option<&DualPotentials>) -> taco_core::Result<SinkhornSolution> {
        let (mu, nu) = self.marginals(t)?;
        solve_matrix(&mu, &nu, &self.cost, &self.sinkhorn, warm)
    }

    pub fn forcing(&self, t: f64) -> taco_core::Result<(Vec<f64>, Vec<f64>)> {
        Ok((grid_forcing(&self.path, Side::Mu, t)?, grid_forcing(&self.path, Side::Nu, t)?))
    }
}

fn jitter(p: &Points, grid: &GridSpec, seed: u64) -> Points {
    use rand::Rng;
    let mut r = rng(seed, STREAM_SAMPLE);
    let mut out = p.clone();
    for i in 0..out.len() {
        for (axis, x) in out.row_mut(i).iter_mut().enumerate() {
            *x += (r.random::<f64>() - 0.5) * grid.width(axis);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn grid_row(
    k: usize,
    t: f64,
    c: &Coupling,
    setup: &GridSetup,
    oracle: Option<&Coupling>,
    n: usize,
    cfg: &RunConfig,
    start: &Instant,
) -> Result<IterationRecord, RunError> {
    let at = RunError::at(k);
    let m = cfg.metrics.metric_config();
    let seed = cfg.metrics.seed;
    let (xs, ys) = sample_coupling(c, n, &mut rng(seed, STREAM_SAMPLE));
    let xs = jitter(&xs, &setup.grid, seed ^ 1);
    let ys = jitter(&ys, &setup.grid, seed ^ 2);
    let (mu, nu) = setup.marginals(t).map_err(&at)?;
    let mu_s = sample(&mu, n, &mut rng(seed ^ 3, STREAM_SAMPLE));
    let nu_s = sample(&nu, n, &mut rng(seed ^ 4, STREAM_SAMPLE));
    let d = distances(&ys, &nu_s, &m).map_err(&at)?;
    Ok(IterationRecord {
        iter: k,
        t,
        sw2_nu: d.sw2,
        sw2_mu: sliced_wasserstein(&xs, &mu_s, 2.0, &m).map_err(&at)?,
        map_rmse: None,
        sinkhorn_div: d.sinkhorn,
        mmd: d.mmd,
        energy_dist: d.energy,
        ess: ess(c.weights()).map_err(&at)?,
        tv_to_oracle: match oracle {
            Some(o) => Some(coupling_tv(c, o).map_err(&at)?),
            None => None,
        },
        wall_ms: elapsed_ms(cfg, start),
    })
}

fn grid_transfer(cfg: &RunConfig) -> Result<TransferOutcome, RunError> {
    let setup = GridSetup::new(cfg, cfg.oracle.tol)?;
    let a = &cfg.algorithm;
    let n = a.outer_steps;
    let delta = cfg.delta();
    let start = Instant::now();
    let first = setup.exact(0.0, None).map_err(RunError::at(0))?;
    let mut c = first.plan.clone();
    let mut potentials = first.potentials;
    let mut warm: Option<TiltRates> = None;
    let mut records = Vec::with_capacity(n + 1);
    let mut last_rates = None;
    let oracle_at = |k: usize, t: f64, pot: &mut DualPotentials| -> Result<Option<Coupling>, RunError> {
        if !cfg.oracle.enabled {
            return Ok(None);
        }
        let sol = setup.exact(t, Some(pot)).map_err(RunError::at(k))?;
        *pot = sol.potentials;
        Ok(Some(sol.plan))
    };
    for k in 0..n {
        let t = k as f64 * delta;
        let oracle = oracle_at(k, t, &mut potentials)?;
        let ns = if k == 0 { cfg.metrics.eval_samples } else { cfg.metrics.track_samples };
        records.push(grid_row(k, t, &c, &setup, oracle.as_ref(), ns, cfg, &start)?);
        let at = RunError::at(k);
        let (zeta, eta) = setup.forcing(t).map_err(&at)?;
        let ops = Conditionals::new(&c, &a.tilt).map_err(&at)?;
        let sol = gauss_seidel(&ops, &zeta, &eta, &a.tilt, warm.as_ref()).map_err(&at)?;
        if !sol.converged {
            return Err(at(Error::NoConvergence { iterations: sol.sweeps, residual: sol.residual_x.max(sol.residual_y) }));
        }
        let next = tilt_step(&c, &sol.rates, delta).map_err(&at)?;
        last_rates = Some((c, sol.rates.clone()));
        c = next;
        warm = Some(sol.rates);
    }
    let oracle = oracle_at(n, 1.0, &mut potentials)?;
    records.push(grid_row(n, 1.0, &c, &setup, oracle.as_ref(), cfg.metrics.eval_samples, cfg, &start)?);
    Ok(TransferOutcome { records, final_coupling: c.with_epsilon_hint(Some(cfg.epsilon())), last_rates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneshotReport {
    /// Oracle-plan mass on the thresholded support of the reference plan.
    pub coverage: f64,
    pub tv_to_oracle: f64,
    /// L1 marginal error of the fitted plan against `(mu, nu)`.
    pub marginal_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub support_entries: usize,
    /// Coverage and TV both on the failing side of the configured thresholds.
    pub failure_reproduced: bool,
}

/// Tilts the reference plan onto the new marginals in one shot by
/// alternating row and column scaling, with no path in between.
pub fn run_oneshot_baseline(cfg: &RunConfig) -> Result<OneshotReport, RunError> {
    cfg.validate()?;
    let setup = GridSetup::new(cfg, cfg.oracle.tol)?;
    let reference = setup.exact(0.0, None).map_err(RunError::at(0))?.plan;
    let oracle = setup.exact(1.0, None).map_err(RunError::at(0))?.plan;
    let (mu, nu) = setup.marginals(1.0)?;
    let (n, m) = (reference.n_x(), reference.n_y());
    let lr = reference.log_weights();
    let top = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = top + cfg.oneshot.support_floor.ln();
    let mask: Vec<bool> = lr.iter().map(|w| *w >= floor).collect();
    let coverage: f64 = oracle.weights().iter().zip(&mask).filter(|(_, &s)| s).map(|(w, _)| w).sum();
    let mut lw: Vec<f64> = lr.iter().zip(&mask).map(|(w, &s)| if s { *w } else { f64::NEG_INFINITY }).collect();
    let (la, lb) = (mu.log_weights(), nu.log_weights());
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut buf = vec![0.0; n.max(m)];
    while iterations < cfg.oneshot.max_iter {
        iterations += 1;
        for i in 0..n {
            let s = logsumexp(&lw[i * m..(i + 1) * m]);
            if s > f64::NEG_INFINITY {
                lw[i * m..(i + 1) * m].iter_mut().for_each(|w| *w += la[i] - s);
            }
        }
        for j in 0..m {
            for i in 0..n {
                buf[i] = lw[i * m + j];
            }
            let s = logsumexp(&buf[..n]);
            if s > f64::NEG_INFINITY {
                for i in 0..n {
                    lw[i * m + j] += lb[j] - s;
                }
            }
        }
        err = (0..n).map(|i| (logsumexp(&lw[i * m..(i + 1) * m]).exp() - la[i].exp()).abs()).sum();
        if err <= cfg.oneshot.tol {
            break;
        }
    }
    log_normalize(&mut lw);
    let fitted = Coupling::table(&mu, &nu, lw)?;
    let tv = coupling_tv(&fitted, &oracle)?;
    Ok(OneshotReport {
        coverage,
        tv_to_oracle: tv,
        marginal_error: err,
        iterations,
        converged: err <= cfg.oneshot.tol,
        support_entries: mask.iter().filter(|&&s| s).count(),
        failure_reproduced: coverage < cfg.check.max_oneshot_coverage && tv >= cfg.check.min_oneshot_tv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// `max_t TV(frozen, exact)`.
    Tv,
    /// `max_t max_z |beta_s[frozen] - beta_s[exact]|` at the probe time.
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log error` against `log N`; first order is -1.
    pub slope: f64,
    /// `exp(intercept)`: the fitted constant in `error ~ C N^slope`.
    pub constant: f64,
    /// Errors shrink strictly as delta shrinks.
    pub monotone: bool,
}

/// Runs the frozen scheme with `n` steps and records the error against the
/// exact EOT path.
fn sweep_error(setup: &GridSetup, n: usize, kind: SweepKind, cfg: &RunConfig) -> Result<f64, RunError> {
    let conv = &cfg.convergence;
    let tilt =
        TiltConfig { gs_tol: conv.gs_tol, gs_max_sweeps: cfg.algorithm.tilt.gs_max_sweeps.max(100_000), ..cfg.algorithm.tilt.clone() };
    let bridge = BridgeConfig { sigma: conv.sigma, ..cfg.algorithm.bridge.clone() };
    let delta = 1.0 / n as f64;
    let first = setup.exact(0.0, None).map_err(RunError::at(0))?;
    let mut c = first.plan;
    let mut potentials = first.potentials;
    let mut warm: Option<TiltRates> = None;
    let mut worst: f64 = 0.0;
    let mut scratch = Vec::new();
    for k in 0..n {
        let at = RunError::at(k);
        let t = k as f64 * delta;
        let (zeta, eta) = setup.forcing(t).map_err(&at)?;
        let ops = Conditionals::new(&c, &tilt).map_err(&at)?;
        let sol = gauss_seidel(&ops, &zeta, &eta, &tilt, warm.as_ref()).map_err(&at)?;
        if !sol.converged {
            return Err(at(Error::NoConvergence { iterations: sol.sweeps, residual: sol.residual_x.max(sol.residual_y) }));
        }
        c = tilt_step(&c, &sol.rates, delta).map_err(&at)?;
        warm = Some(sol.rates);
        let exact = setup.exact(t + delta, Some(&potentials)).map_err(&at)?;
        potentials = exact.potentials;
        let e = match kind {
            SweepKind::Tv => coupling_tv(&c, &exact.plan).map_err(&at)?,
            SweepKind::Beta => {
                let (fa, fb) = (BetaEvaluator::new(&c), BetaEvaluator::new(&exact.plan));
                let mut e: f64 = 0.0;
                for &p in &conv.probes {
                    let z = LiftedState { z1: vec![p; c.dim()], z2: vec![p; c.dim()] };
                    let u = fa.beta(conv.s_probe, &z, &bridge, &mut scratch).map_err(&at)?;
                    let v = fb.beta(conv.s_probe, &z, &bridge, &mut scratch).map_err(&at)?;
                    e = u.iter().zip(&v).fold(e, |m, (a, b)| m.max((a - b).abs()));
                }
                e
            }
        };
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Frozen-scheme error for every configured step count, with the log-log fit.
pub fn run_sweep(cfg: &RunConfig, kind: SweepKind) -> Result<SweepReport, RunError> {
    cfg.validate()?;
    let setup = GridSetup::new(cfg, cfg.convergence.sinkhorn_tol)?;
    let mut steps = cfg.convergence.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let errors = par_map(&steps, |&n| sweep_error(&setup, n, kind, cfg))?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(steps.len());
    for (&n, &e) in steps.iter().zip(&errors) {
        let ratio = rows.last().map(|r| r.error / e);
        rows.push(SweepRow { steps: n, delta: 1.0 / n as f64, error: e, ratio });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.steps as f64).collect();
    let (slope, intercept) = if rows.len() >= 2 { loglog_fit(&xs, &errors) } else { (f64::NAN, f64::NAN) };
    let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
    Ok(SweepReport { kind, rows, slope, constant: intercept.exp(), monotone })
}

pub fn run_tv_convergence(cfg: &RunConfig) -> Result<SweepReport, RunError> {
    run_sweep(cfg, SweepKind::Tv)
}

pub fn run_beta_convergence(cfg: &RunConfig) -> Result<SweepReport, RunError> {
    run_sweep(cfg, SweepKind::Beta)
}

fn within(v: f64, r: [f64; 2]) -> bool {
    v >= r[0] && v <= r[1]
}

/// Threshold checks behind `--check`; returns one message per violation.
pub fn check_transfer(records: &[IterationRecord], cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return vec!["no records".into()];
    };
    let ck = &cfg.check;
    match cfg.algorithm.mode {
        Mode::Particle => {
            if let (Some(r0), Some(r)) = (first.map_rmse, last.map_rmse) {
                if !(r <= ck.max_map_rmse) {
                    out.push(format!("final map_rmse {r:.4} > {}", ck.max_map_rmse));
                }
                if !(r <= (1.0 - ck.min_rmse_reduction) * r0) {
                    out.push(format!("map_rmse {r0:.4} -> {r:.4} is less than a {:.0}% reduction", 100.0 * ck.min_rmse_reduction));
                }
            }
            if !(last.sw2_nu <= ck.max_sw2) {
                out.push(format!("final sw2_nu {:.4} > {}", last.sw2_nu, ck.max_sw2));
            }
        }
        Mode::Grid => match last.tv_to_oracle {
            Some(tv) if tv <= ck.max_grid_tv => {}
            Some(tv) => out.push(format!("final tv_to_oracle {tv:.4} > {}", ck.max_grid_tv)),
            None => out.push("oracle disabled, tv_to_oracle unavailable".into()),
        },
    }
    out
}

pub fn check_sweep(r: &SweepReport, cfg: &RunConfig) -> Vec<String> {
    let ck = &cfg.check;
    let mut out = Vec::new();
    if !within(r.slope, ck.slope_range) {
        out.push(format!("slope {:.3} outside [{}, {}]", r.slope, ck.slope_range[0], ck.slope_range[1]));
    }
    match r.kind {
        SweepKind::Tv => {
            if !r.monotone {
                out.push("errors are not monotone in delta".into());
            }
        }
        SweepKind::Beta => {
            for row in &r.rows {
                if let Some(q) = row.ratio.filter(|q| !within(*q, ck.ratio_range)) {
                    out.push(format!("ratio {q:.3} at N = {} outside [{}, {}]", row.steps, ck.ratio_range[0], ck.ratio_range[1]));
                }
            }
        }
    }
    out
}

pub fn check_oneshot(r: &OneshotReport, cfg: &RunConfig) -> Vec<String> {
    if r.failure_reproduced {
        Vec::new()
    } else {
        vec![format!(
            "expected the one-shot failure (coverage < {}, TV >= {}), got coverage {:.4}, TV {:.4}",
            cfg.check.max_oneshot_coverage, cfg.check.min_oneshot_tv, r.coverage, r.tv_to_oracle
        )]
    }
}

/// Scores a stored final coupling again: particle pairs are read as
/// (source, transported image), grid plans are compared with the oracle.
pub fn rescore(cfg: &RunConfig, c: &Coupling) -> Result<IterationRecord, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let n = cfg.algorithm.outer_steps;
    let mut rec = match cfg.algorithm.mode {
        Mode::Particle => {
            if c.is_grid() {
                return Err(RunError::Format("particle-mode run with a grid coupling".into()));
            }
            let task = make_task(&cfg.task)?;
            let m = cfg.metrics.metric_config();
            let (sources, moved) = (c.x_support(), c.y_support());
            let d = distances(moved, &task.nu_new.points().head(moved.len()), &m)?;
            IterationRecord {
                iter: n,
                t: 1.0,
                sw2_nu: d.sw2,
                sw2_mu: sliced_wasserstein(sources, &task.mu_new.points().head(sources.len()), 2.0, &m)?,
                map_rmse: match &task.map {
                    Some(map) => Some(map_rmse(sources, moved, map)?),
                    None => None,
                },
                sinkhorn_div: d.sinkhorn,
                mmd: d.mmd,
                energy_dist: d.energy,
                ess: ess(c.weights())?,
                tv_to_oracle: None,
                wall_ms: None,
            }
        }
        Mode::Grid => {
            let setup = GridSetup::new(cfg, cfg.oracle.tol)?;
            let oracle = if cfg.oracle.enabled { Some(setup.exact(1.0, None)?.plan) } else { None };
            if oracle.as_ref().is_some_and(|o| !o.same_support(c)) {
                return Err(RunError::Format("stored plan does not live on the configured grid".into()));
            }
            grid_row(n, 1.0, c, &setup, oracle.as_ref(), cfg.metrics.eval_samples, cfg, &start)?
        }
    };
    rec.wall_ms = None;
    Ok(rec)
}
