//! Simulated distributed methods sharing one loop: GD, Clip-GD and its noisy
//! variant, Clip21-Avg, Clip21-GD, DP-Clip21-GD and Press-Clip21-GD.
//!
//! One step at iterate `x_k`:
//!
//! 1. every node evaluates `∇f_i(x_k)` (in parallel when the shards are large);
//! 2. Clip21 variants update their shifts `v^i` from the clipped difference
//!    `∇f_i(x_k) − v^i`, the other methods form their direction directly;
//! 3. the server averages in ascending node order and moves `x`.
//!
//! The telemetry row for step `k` is built from the same gradient evaluations,
//! so `φ_k` uses `x_k` together with the freshly updated shifts `v_k`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::ops::{clip_with_norm, Compressor};
use crate::problems::Problem;
use crate::vector::{all_finite, norm, norm_sq, Vector};

/// Below this many multiply-adds per step the node loop stays sequential.
const PARALLEL_WORK: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Gd,
    ClipGd,
    Clip21Avg,
    Clip21Gd,
    DpClipGd,
    DpClip21Gd,
    PressClip21Gd,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gd,
        Method::ClipGd,
        Method::Clip21Avg,
        Method::Clip21Gd,
        Method::DpClipGd,
        Method::DpClip21Gd,
        Method::PressClip21Gd,
    ];

    pub fn is_dp(self) -> bool {
        matches!(self, Method::DpClipGd | Method::DpClip21Gd)
    }

    /// Methods that maintain per-node shifts.
    pub fn uses_shifts(self) -> bool {
        matches!(self, Method::Clip21Avg | Method::Clip21Gd | Method::DpClip21Gd | Method::PressClip21Gd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gd => "gd",
            Method::ClipGd => "clip-gd",
            Method::Clip21Avg => "clip21-avg",
            Method::Clip21Gd => "clip21-gd",
            Method::DpClipGd => "dp-clip-gd",
            Method::DpClip21Gd => "dp-clip21-gd",
            Method::PressClip21Gd => "press-clip21-gd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == norm)
            .ok_or_else(|| Error::Usage(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub tau: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub nu: f64,
    pub compressor: Option<Compressor>,
    pub iters: usize,
    pub seed: u64,
}

impl MethodConfig {
    pub fn new(method: Method, tau: f64, gamma: f64, iters: usize) -> Self {
        MethodConfig { method, tau, gamma, sigma: 0.0, nu: 0.0, compressor: None, iters, seed: 0 }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::config("iteration count must be >= 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("stepsize must be finite and >= 0, got {}", self.gamma)));
        }
        if self.method != Method::Gd && !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.method.is_dp() {
            if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                return Err(Error::config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
            }
            if !(self.nu > 0.0) {
                return Err(Error::config(format!("nu must be > 0 for DP methods, got {}", self.nu)));
            }
        }
        if self.method == Method::PressClip21Gd {
            match self.compressor {
                Some(c) => c.validate(d)?,
                None => return Err(Error::config("press-clip21-gd needs a compressor")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub k: usize,
    pub x: Vector,
    pub v: Vec<Vector>,
    pub v_bar: Vector,
    pub active: Vec<bool>,
    /// Largest gap seen between the incrementally maintained aggregate and
    /// the direct average, before resynchronisation.
    pub aggregate_drift: f64,
}

impl OptimizerState {
    /// Fresh state with all shifts at zero.
    pub fn new(x0: Vector, n: usize) -> Self {
        let d = x0.dim();
        OptimizerState {
            k: 0,
            x: x0,
            v: vec![Vector::zeros(d); n],
            v_bar: Vector::zeros(d),
            active: vec![false; n],
            aggregate_drift: 0.0,
        }
    }

    pub fn with_shifts(x0: Vector, v_init: Vec<Vector>) -> Result<Self> {
        let d = x0.dim();
        if v_init.iter().any(|v| v.dim() != d) {
            return Err(Error::invalid("initial shifts must match the iterate dimension"));
        }
        let v_bar = Vector::from_raw(crate::vector::mean(v_init.iter().map(|v| v.as_slice()), d));
        let n = v_init.len();
        Ok(OptimizerState { k: 0, x: x0, v: v_init, v_bar, active: vec![false; n], aggregate_drift: 0.0 })
    }
}

/// Quantities measured at `x_k` during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub k: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    /// `(1/n) Σ ‖∇f_i(x_k) − v_k^i‖²`, zero for methods without shifts.
    pub shift_error: f64,
    pub active_nodes: usize,
    pub v_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub lyapunov: f64,
    pub active_nodes: usize,
    pub v_norm: f64,
    pub gamma: f64,
    pub wall_micros: u64,
}

/// Lower bound on `f` used by the Lyapunov function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FInf {
    Exact(f64),
    /// From a long GD pre-solve; `φ_k` is then only an estimate.
    Estimated(f64),
}

impl FInf {
    pub fn value(self) -> f64 {
        match self {
            FInf::Exact(v) | FInf::Estimated(v) => v,
        }
    }

    pub fn is_estimate(self) -> bool {
        matches!(self, FInf::Estimated(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub f_inf: FInf,
    /// Weight `A` of the shift-error term in `φ_k`.
    pub lyapunov_a: f64,
    pub wall_clock: bool,
}

impl RunOptions {
    pub fn new(f_inf: FInf, lyapunov_a: f64) -> Self {
        RunOptions { f_inf, lyapunov_a, wall_clock: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: OptimizerState,
    pub trace: Vec<IterationRecord>,
    /// `f(x_K)` and `‖∇f(x_K)‖²` at the returned iterate.
    pub final_f: f64,
    pub final_grad_norm_sq: f64,
    pub f_inf: FInf,
}

struct NodeEval {
    f: f64,
    grad: Vec<f64>,
}

fn evaluate_nodes(problem: &Problem, x: &[f64]) -> Vec<NodeEval> {
    let n = problem.n();
    let d = problem.dim();
    let work: usize = problem.shards().iter().map(|s| s.len()).sum::<usize>() * d;
    let eval = |i: usize| {
        let mut grad = vec![0.0; d];
        let f = problem.value_grad_local_into(i, x, &mut grad);
        NodeEval { f, grad }
    };
    if work >= PARALLEL_WORK && n > 1 {
        (0..n).into_par_iter().map(eval).collect()
    } else {
        (0..n).map(eval).collect()
    }
}

fn average<'a>(rows: impl Iterator<Item = &'a [f64]>, d: usize) -> Vec<f64> {
    crate::vector::mean(rows, d)
}

fn check_state(state: &OptimizerState, problem: &Problem) -> Result<()> {
    if state.x.dim() != problem.dim() {
        return Err(Error::invalid(format!("iterate has dimension {}, problem has {}", state.x.dim(), problem.dim())));
    }
    if state.v.len() != problem.n() || state.active.len() != problem.n() {
        return Err(Error::invalid("state node count does not match the problem"));
    }
    Ok(())
}

/// Performs one step of `cfg.method` in place.
pub fn step(
    state: &mut OptimizerState,
    problem: &Problem,
    cfg: &MethodConfig,
    noise: &NoiseStream,
) -> Result<StepReport> {
    check_state(state, problem)?;
    let k = state.k;
    let n = problem.n();
    let d = problem.dim();
    let evals = evaluate_nodes(problem, &state.x);
    if evals.iter().any(|e| !e.f.is_finite() || !all_finite(&e.grad)) {
        return Err(Error::Diverged { iteration: k });
    }
    let f = evals.iter().map(|e| e.f).sum::<f64>() / n as f64;
    let grad = average(evals.iter().map(|e| e.grad.as_slice()), d);
    let grad_norm_sq = norm_sq(&grad);

    let report = if cfg.method.uses_shifts() {
        shift_update(state, &evals, cfg, noise)?;
        let shift_error =
            evals.iter().zip(&state.v).map(|(e, v)| crate::vector::dist(&e.grad, v).powi(2)).sum::<f64>() / n as f64;
        if cfg.method != Method::Clip21Avg {
            for (xj, vj) in state.x.as_mut_slice().iter_mut().zip(state.v_bar.iter()) {
                *xj -= cfg.gamma * vj;
            }
        }
        StepReport {
            k,
            f,
            grad_norm_sq,
            shift_error,
            active_nodes: state.active.iter().filter(|a| **a).count(),
            v_norm: state.v_bar.norm(),
        }
    } else {
        let dir = direct_direction(state, &evals, &grad, cfg, noise, n, d);
        for (xj, gj) in state.x.as_mut_slice().iter_mut().zip(&dir) {
            *xj -= cfg.gamma * gj;
        }
        let v_norm = norm(&dir);
        state.v_bar = Vector::from_raw(dir);
        StepReport {
            k,
            f,
            grad_norm_sq,
            shift_error: 0.0,
            active_nodes: state.active.iter().filter(|a| **a).count(),
            v_norm,
        }
    };
    state.k += 1;
    if !all_finite(&state.x) {
        return Err(Error::Diverged { iteration: k });
    }
    Ok(report)
}

/// Search direction of GD and (noisy) Clip-GD.
fn direct_direction(
    state: &mut OptimizerState,
    evals: &[NodeEval],
    grad: &[f64],
    cfg: &MethodConfig,
    noise: &NoiseStream,
    n: usize,
    d: usize,
) -> Vec<f64> {
    if cfg.method == Method::Gd {
        state.active.iter_mut().for_each(|a| *a = false);
        return grad.to_vec();
    }
    let clipped: Vec<Vec<f64>> = evals
        .iter()
        .zip(state.active.iter_mut())
        .map(|(e, a)| {
            let (c, _, active) = clip_with_norm(&e.grad, cfg.tau);
            *a = active;
            c
        })
        .collect();
    let mut dir = average(clipped.iter().map(|c| c.as_slice()), d);
    if cfg.method == Method::DpClipGd && cfg.sigma > 0.0 {
        // server-side noise lives on the stream after the last node
        let zeta = noise.gaussian(n as u64, state.k as u64, cfg.sigma, d);
        let (z, _, _) = clip_with_norm(&zeta, cfg.nu);
        for (dj, zj) in dir.iter_mut().zip(&z) {
            *dj += zj;
        }
    }
    dir
}

fn shift_update(state: &mut OptimizerState, evals: &[NodeEval], cfg: &MethodConfig, noise: &NoiseStream) -> Result<()> {
    let n = evals.len();
    let d = state.x.dim();
    let mut delta_sum = vec![0.0; d];
    for (i, e) in evals.iter().enumerate() {
        let v = state.v[i].as_mut_slice();
        let diff: Vec<f64> = e.grad.iter().zip(v.iter()).map(|(g, vi)| g - vi).collect();
        let (clipped, _, active) = clip_with_norm(&diff, cfg.tau);
        state.active[i] = active;
        let before = v.to_vec();
        match cfg.method {
            Method::Clip21Avg | Method::Clip21Gd => {
                if active {
                    add_into(v, &clipped);
                } else {
                    v.copy_from_slice(&e.grad);
                }
            }
            Method::DpClip21Gd => {
                if active {
                    add_into(v, &clipped);
                } else {
                    v.copy_from_slice(&e.grad);
                }
                if cfg.sigma > 0.0 {
                    let zeta = noise.gaussian(i as u64, state.k as u64, cfg.sigma, d);
                    let (z, _, _) = clip_with_norm(&zeta, cfg.nu);
                    add_into(v, &z);
                }
            }
            Method::PressClip21Gd => {
                let c = cfg.compressor.ok_or_else(|| Error::config("press-clip21-gd needs a compressor"))?;
                let kept = c.kept_indices(&clipped);
                for j in kept {
                    if active {
                        v[j] += clipped[j];
                    } else {
                        v[j] = e.grad[j];
                    }
                }
            }
            _ => unreachable!("shift update for a method without shifts"),
        }
        for ((s, a), b) in delta_sum.iter_mut().zip(v.iter()).zip(&before) {
            *s += a - b;
        }
    }
    let inv_n = 1.0 / n as f64;
    let incremental: Vec<f64> = state.v_bar.iter().zip(&delta_sum).map(|(b, s)| b + s * inv_n).collect();
    let direct = average(state.v.iter().map(|v| v.as_slice()), d);
    let drift = crate::vector::dist(&incremental, &direct);
    state.aggregate_drift = state.aggregate_drift.max(drift);
    if !all_finite(&direct) {
        return Err(Error::Diverged { iteration: state.k });
    }
    state.v_bar = Vector::from_raw(direct);
    Ok(())
}

fn add_into(v: &mut [f64], g: &[f64]) {
    for (a, b) in v.iter_mut().zip(g) {
        *a += b;
    }
}

/// Runs `cfg.iters` steps from `x0` with zero initial shifts.
pub fn run<H>(cfg: &MethodConfig, problem: &Problem, x0: Vector, opts: RunOptions, hook: H) -> Result<RunOutput>
where
    H: FnMut(&IterationRecord, &OptimizerState),
{
    let state = OptimizerState::new(x0, problem.n());
    run_from(cfg, problem, state, opts, hook)
}

/// Runs `cfg.iters` steps from an explicit starting state.
pub fn run_from<H>(
    cfg: &MethodConfig,
    problem: &Problem,
    mut state: OptimizerState,
    opts: RunOptions,
    mut hook: H,
) -> Result<RunOutput>
where
    H: FnMut(&IterationRecord, &OptimizerState),
{
    cfg.validate(problem.dim())?;
    check_state(&state, problem)?;
    let noise = NoiseStream::new(cfg.seed);
    let f_inf = opts.f_inf.value();
    let start = Instant::now();
    let mut trace = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let r = step(&mut state, problem, cfg, &noise)?;
        let rec = IterationRecord {
            k: r.k,
            f: r.f,
            grad_norm_sq: r.grad_norm_sq,
            lyapunov: r.f - f_inf + opts.lyapunov_a * r.shift_error,
            active_nodes: r.active_nodes,
            v_norm: r.v_norm,
            gamma: cfg.gamma,
            wall_micros: if opts.wall_clock { start.elapsed().as_micros() as u64 } else { 0 },
        };
        hook(&rec, &state);
        trace.push(rec);
    }
    let final_f = problem.eval_global_unchecked(&state.x);
    let final_grad = problem.grad_global(&state.x).map_err(|_| Error::Diverged { iteration: state.k })?;
    if !final_f.is_finite() {
        return Err(Error::Diverged { iteration: state.k });
    }
    Ok(RunOutput { state, trace, final_f, final_grad_norm_sq: final_grad.norm_sq(), f_inf: opts.f_inf })
}

pub fn gd_step(state: &mut OptimizerState, problem: &Problem, cfg: &MethodConfig) -> Result<StepReport> {
    let cfg = MethodConfig { method: Method::Gd, ..cfg.clone() };
    step(state, problem, &cfg, &NoiseStream::new(cfg.seed))
}

/// Clip-GD, or its noisy variant when `cfg.method` is `DpClipGd`.
pub fn clip_gd_step(
    state: &mut OptimizerState,
    problem: &Problem,
    cfg: &MethodConfig,
    noise: &NoiseStream,
) -> Result<StepReport> {
    let method = if cfg.method == Method::DpClipGd { Method::DpClipGd } else { Method::ClipGd };
    step(state, problem, &MethodConfig { method, ..cfg.clone() }, noise)
}

pub fn clip21_gd_step(state: &mut OptimizerState, problem: &Problem, cfg: &MethodConfig) -> Result<StepReport> {
    let cfg = MethodConfig { method: Method::Clip21Gd, ..cfg.clone() };
    step(state, problem, &cfg, &NoiseStream::new(cfg.seed))
}

pub fn dp_clip21_gd_step(
    state: &mut OptimizerState,
    problem: &Problem,
    cfg: &MethodConfig,
    noise: &NoiseStream,
) -> Result<StepReport> {
    step(state, problem, &MethodConfig { method: Method::DpClip21Gd, ..cfg.clone() }, noise)
}

pub fn press_clip21_gd_step(state: &mut OptimizerState, problem: &Problem, cfg: &MethodConfig) -> Result<StepReport> {
    let cfg = MethodConfig { method: Method::PressClip21Gd, ..cfg.clone() };
    step(state, problem, &cfg, &NoiseStream::new(cfg.seed))
}

/// Shifts of every node after each Clip21-Avg round, plus their averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip21AvgTrace {
    /// `v[k][i]` is node `i`'s shift after round `k`.
    pub v: Vec<Vec<Vector>>,
    pub aggregate: Vec<Vector>,
}

/// Error-feedback averaging of fixed vectors `a^i`.
pub fn clip21_avg_run(a: &[Vector], tau: f64, v_init: &[Vector], k: usize) -> Result<Clip21AvgTrace> {
    if a.is_empty() {
        return Err(Error::invalid("need at least one vector to average"));
    }
    if a.len() != v_init.len() {
        return Err(Error::invalid(format!("{} targets but {} initial shifts", a.len(), v_init.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
    }
    if k == 0 {
        return Err(Error::config("iteration count must be >= 1"));
    }
    let d = a[0].dim();
    if a.iter().chain(v_init).any(|v| v.dim() != d) {
        return Err(Error::invalid("all vectors must share one dimension"));
    }
    let mut v: Vec<Vec<f64>> = v_init.iter().map(|x| x.to_vec()).collect();
    let mut trace = Clip21AvgTrace { v: Vec::with_capacity(k), aggregate: Vec::with_capacity(k) };
    for _ in 0..k {
        for (vi, ai) in v.iter_mut().zip(a) {
            let diff: Vec<f64> = ai.iter().zip(vi.iter()).map(|(x, y)| x - y).collect();
            let (c, _, active) = clip_with_norm(&diff, tau);
            if active {
                add_into(vi, &c);
            } else {
                vi.copy_from_slice(ai);
            }
        }
        trace.aggregate.push(Vector::from_raw(average(v.iter().map(|x| x.as_slice()), d)));
        trace.v.push(v.iter().map(|x| Vector::from_raw(x.clone())).collect());
    }
    Ok(trace)
}

/// Lower-bound estimate for `f` from a long GD run with `γ = 1/L`: the best
/// value seen, less a small margin.
pub fn estimate_f_inf(problem: &Problem, x0: &[f64], iters: usize) -> Result<f64> {
    let l = problem.smoothness().l;
    if !(l > 0.0) {
        return Err(Error::config("pre-solve needs L > 0"));
    }
    let gamma = 1.0 / l;
    let d = problem.dim();
    let mut x = x0.to_vec();
    let mut best = f64::INFINITY;
    for _ in 0..iters {
        let evals = evaluate_nodes(problem, &x);
        let f = evals.iter().map(|e| e.f).sum::<f64>() / problem.n() as f64;
        if !f.is_finite() {
            break;
        }
        best = best.min(f);
        let g = average(evals.iter().map(|e| e.grad.as_slice()), d);
        if norm_sq(&g) == 0.0 {
            break;
        }
        for (xj, gj) in x.iter_mut().zip(&g) {
            *xj -= gamma * gj;
        }
    }
    best = best.min(problem.eval_global_unchecked(&x));
    if !best.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    Ok(best - 1e-9)
}
