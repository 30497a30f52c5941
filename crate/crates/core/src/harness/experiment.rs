//! Turns a `RunConfig` into a problem, a stepsize and a finished run.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{GammaSpec, RunConfig, VInitSpec, X0Spec, GRID_MULTIPLIERS};
use super::csv::write_csv;
use crate::data::{parse_libsvm, prepare_shards};
use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::optimizers::{estimate_f_inf, run_from, FInf, Method, MethodConfig, OptimizerState, RunOptions, RunOutput};
use crate::problems::{Problem, ProblemKind};
use crate::theory::{self, LyapunovParams, StepsizeInputs};
use crate::vector::Vector;

pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let mut p = match cfg.problem {
        ProblemKind::QuadCounterexample => Problem::quad_counterexample(cfg.beta_q, cfg.alpha_q)?,
        kind => {
            let path = cfg.data.as_ref().ok_or_else(|| Error::Usage(format!("--data is required for {kind}")))?;
            let ds = parse_libsvm(BufReader::new(File::open(path)?))?;
            let shards = prepare_shards(&ds, cfg.nodes)?;
            if kind == ProblemKind::Logistic {
                Problem::logistic(shards, cfg.reg, cfg.lambda)?
            } else {
                Problem::linreg(shards, cfg.reg, cfg.lambda)?
            }
        }
    };
    if let Some(l) = cfg.l_override {
        p = p.with_l_override(l)?;
    }
    if let Some(mu) = cfg.mu {
        p = p.with_mu(mu)?;
    }
    Ok(p)
}

/// Zero vector for data problems; `τ/α_q` on the counterexample, where plain
/// clipping is stuck.
pub fn initial_point(cfg: &RunConfig, problem: &Problem) -> Result<Vector> {
    let d = problem.dim();
    match &cfg.x0 {
        None if problem.kind() == ProblemKind::QuadCounterexample => {
            let x = if cfg.tau.is_finite() { cfg.tau / cfg.alpha_q } else { 1.0 };
            Vector::new(vec![x])
        }
        None | Some(X0Spec::Zeros) => Ok(Vector::zeros(d)),
        Some(X0Spec::Explicit(v)) => {
            if v.len() != d {
                return Err(Error::Usage(format!("--x0 has {} components, problem dimension is {d}", v.len())));
            }
            Vector::new(v.clone())
        }
        Some(X0Spec::Gaussian(scale)) => Ok(NoiseStream::new(cfg.seed).gaussian(u64::MAX - 1, 0, *scale, d)),
    }
}

/// Inputs shared by every stepsize rule, measured at `x0`.
#[derive(Debug, Clone)]
pub struct StartInfo {
    pub grad0_norms: Vec<f64>,
    pub f0_gap: f64,
    pub eta: f64,
}

pub fn start_info(problem: &Problem, x0: &[f64], f_inf: f64, tau: f64) -> Result<StartInfo> {
    let grad0_norms =
        (0..problem.n()).map(|i| problem.grad_local(i, x0).map(|g| g.norm())).collect::<Result<Vec<_>>>()?;
    let f0_gap = (problem.eval_global(x0)? - f_inf).max(0.0);
    let eta = if tau.is_finite() { theory::eta_of(tau, &grad0_norms) } else { 1.0 };
    Ok(StartInfo { grad0_norms, f0_gap, eta })
}

fn stepsize_inputs(cfg: &RunConfig, problem: &Problem, start: &StartInfo) -> Result<StepsizeInputs> {
    let s = problem.smoothness();
    let mut inp = StepsizeInputs::new(s.l, s.l_max, cfg.tau, start.grad0_norms.clone(), start.f0_gap);
    inp.mu = cfg.mu;
    inp.nu = Some(cfg.nu);
    if let Some(c) = cfg.compressor {
        inp.alpha_press = Some(c.alpha(problem.dim())?);
    }
    Ok(inp)
}

/// Theory stepsize for the configured method; `1/L` for methods without one.
pub fn auto_gamma(cfg: &RunConfig, problem: &Problem, start: &StartInfo) -> Result<f64> {
    let l = problem.smoothness().l;
    if !(l > 0.0) {
        return Err(Error::config("smoothness constant L is zero; pass --gamma or --l-override"));
    }
    let inp = stepsize_inputs(cfg, problem, start)?;
    let b = match cfg.method {
        Method::Gd | Method::ClipGd | Method::DpClipGd => return Ok(1.0 / l),
        Method::Clip21Gd | Method::Clip21Avg if problem.n() == 1 => theory::stepsize_single(&inp)?,
        Method::Clip21Gd | Method::Clip21Avg => theory::stepsize_multi(&inp)?,
        Method::DpClip21Gd => theory::stepsize_dp(&inp)?,
        Method::PressClip21Gd => theory::stepsize_press(&inp)?,
    };
    Ok(b.gamma)
}

/// Weight of the shift-error term in `φ_k` for this method and stepsize.
pub fn lyapunov_weight(cfg: &RunConfig, problem: &Problem, gamma: f64, eta: f64) -> Result<f64> {
    Ok(match cfg.method {
        Method::Gd | Method::ClipGd | Method::DpClipGd => 0.0,
        Method::Clip21Gd | Method::Clip21Avg => LyapunovParams::clip21(gamma, eta).a,
        Method::DpClip21Gd => LyapunovParams::dp(gamma, eta).a,
        Method::PressClip21Gd => {
            let c = cfg.compressor.ok_or_else(|| Error::Usage("press-clip21-gd requires --compressor".into()))?;
            let beta = theory::press_beta(c.alpha(problem.dim())?, eta)?.beta;
            LyapunovParams::press(gamma, eta, beta).a
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub problem: ProblemKind,
    pub gamma: f64,
    pub iters: usize,
    pub initial_grad_norm_sq: f64,
    pub final_f: f64,
    pub final_grad_norm_sq: f64,
    /// First iteration from which no node clips again, if that happens.
    pub all_inactive_from: Option<usize>,
    /// `max_i k*(‖∇f_i(x_0)‖, τ)`.
    pub k_star: u64,
    pub f_inf: f64,
    pub f_inf_estimated: bool,
    pub lyapunov_a: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inactive = self.all_inactive_from.map_or_else(|| "none".to_string(), |k| k.to_string());
        write!(
            f,
            "method={} problem={} gamma={:.16e} iters={} initial_grad_norm_sq={:.16e} final_f={:.16e} \
             final_grad_norm_sq={:.16e} all_inactive_from={} k_star={} f_inf={:.16e} f_inf_estimated={}",
            self.method,
            self.problem,
            self.gamma,
            self.iters,
            self.initial_grad_norm_sq,
            self.final_f,
            self.final_grad_norm_sq,
            inactive,
            self.k_star,
            self.f_inf,
            self.f_inf_estimated,
        )
    }
}

/// One stepsize of a grid search.
#[derive(Debug, Clone)]
pub struct GridChild {
    pub gamma: f64,
    pub path: Option<PathBuf>,
    /// Final `‖∇f‖²`, or the iteration at which the run diverged.
    pub outcome: std::result::Result<f64, usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub output: RunOutput,
    pub grid: Vec<GridChild>,
    pub warnings: Vec<String>,
}

pub fn all_inactive_from(trace: &[crate::optimizers::IterationRecord]) -> Option<usize> {
    match trace.iter().rposition(|r| r.active_nodes > 0) {
        None => Some(0),
        Some(last) if last + 1 < trace.len() => Some(last + 1),
        Some(_) => None,
    }
}

/// `trace.csv` → `trace.grid3.csv`.
pub fn grid_child_path(out: &Path, j: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.grid{j}.{}", ext.to_string_lossy()),
        None => format!("{stem}.grid{j}"),
    };
    out.with_file_name(name)
}

pub fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary");
    PathBuf::from(s)
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    let problem = build_problem(cfg)?;
    let x0 = initial_point(cfg, &problem)?;
    let mut warnings = Vec::new();
    if cfg.method.is_dp() && cfg.nu > cfg.tau / 6.0 {
        warnings.push(format!(
            "nu = {} exceeds tau/6 = {}; the privacy floor assumes tau >= 6 nu",
            cfg.nu,
            cfg.tau / 6.0
        ));
    }

    let f_inf = match problem.kind() {
        ProblemKind::QuadCounterexample => FInf::Exact(0.0),
        _ => FInf::Estimated(estimate_f_inf(&problem, &x0, cfg.presolve_iters)?),
    };
    let start = start_info(&problem, &x0, f_inf.value(), cfg.tau)?;

    let state0 = match &cfg.v_init {
        VInitSpec::Zeros => OptimizerState::new(x0.clone(), problem.n()),
        VInitSpec::Explicit(v) => {
            if v.len() != problem.dim() {
                return Err(Error::Usage(format!("--v-init has {} components, expected {}", v.len(), problem.dim())));
            }
            OptimizerState::with_shifts(x0.clone(), vec![Vector::new(v.clone())?; problem.n()])?
        }
    };

    let gammas: Vec<f64> = match cfg.gamma {
        GammaSpec::Value(g) => vec![g],
        GammaSpec::Auto => vec![auto_gamma(cfg, &problem, &start)?],
        GammaSpec::Grid => {
            let l = problem.smoothness().l;
            if !(l > 0.0) {
                return Err(Error::config("smoothness constant L is zero; grid stepsizes are undefined"));
            }
            GRID_MULTIPLIERS.iter().map(|m| m / l).collect()
        }
    };

    let one = |gamma: f64| -> Result<RunOutput> {
        let mc = MethodConfig {
            method: cfg.method,
            tau: cfg.tau,
            gamma,
            sigma: cfg.sigma,
            nu: cfg.nu,
            compressor: cfg.compressor,
            iters: cfg.iters,
            seed: cfg.seed,
        };
        let a = match lyapunov_weight(cfg, &problem, gamma, start.eta) {
            Ok(a) => a,
            Err(Error::Infeasible { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        let opts = RunOptions { f_inf, lyapunov_a: a, wall_clock: cfg.wall_clock };
        run_from(&mc, &problem, state0.clone(), opts, |_, _| {})
    };

    let (output, gamma, grid) = if cfg.gamma == GammaSpec::Grid {
        let results: Vec<Result<RunOutput>> = gammas.par_iter().map(|&g| one(g)).collect();
        let mut children = Vec::with_capacity(results.len());
        let mut best: Option<(usize, RunOutput)> = None;
        for (j, (r, &g)) in results.into_iter().zip(&gammas).enumerate() {
            let path = cfg.out.as_ref().map(|o| grid_child_path(o, j));
            match r {
                Ok(out) => {
                    if let Some(p) = &path {
                        write_csv(&out.trace, p)?;
                    }
                    children.push(GridChild { gamma: g, path, outcome: Ok(out.final_grad_norm_sq) });
                    let better = match &best {
                        None => true,
                        Some((_, b)) => out.final_grad_norm_sq < b.final_grad_norm_sq,
                    };
                    if better {
                        best = Some((j, out));
                    }
                }
                Err(Error::Diverged { iteration }) => {
                    children.push(GridChild { gamma: g, path: None, outcome: Err(iteration) });
                }
                Err(e) => return Err(e),
            }
        }
        let Some((j, out)) = best else {
            let first = children.iter().filter_map(|c| c.outcome.err()).min().unwrap_or(0);
            return Err(Error::Diverged { iteration: first });
        };
        (out, gammas[j], children)
    } else {
        let g = gammas[0];
        (one(g)?, g, Vec::new())
    };

    let initial_grad_norm_sq = problem.grad_global(&x0)?.norm_sq();
    let k_star = if cfg.tau.is_finite() {
        start.grad0_norms.iter().map(|&g| theory::k_star(g, cfg.tau)).max().unwrap_or(0)
    } else {
        0
    };
    let summary = Summary {
        method: cfg.method,
        problem: problem.kind(),
        gamma,
        iters: cfg.iters,
        initial_grad_norm_sq,
        final_f: output.final_f,
        final_grad_norm_sq: output.final_grad_norm_sq,
        all_inactive_from: all_inactive_from(&output.trace),
        k_star,
        f_inf: f_inf.value(),
        f_inf_estimated: f_inf.is_estimate(),
        lyapunov_a: lyapunov_weight(cfg, &problem, gamma, start.eta).unwrap_or(0.0),
    };

    if let Some(out) = &cfg.out {
        write_csv(&output.trace, out)?;
        std::fs::write(summary_path(out), format!("{summary}\n"))?;
    }
    Ok(ExperimentOutcome { summary, output, grid, warnings })
}
