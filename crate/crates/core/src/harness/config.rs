//! Command-line and config-file parsing.
//!
//! A config file holds `key = value` pairs, one per line, with `#` comments.
//! Keys are the long flag names without the leading dashes. File entries are
//! spliced in front of the real arguments, so anything given on the command
//! line wins.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::ops::Compressor;
use crate::optimizers::Method;
use crate::problems::{ProblemKind, Regularizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    Value(f64),
    Auto,
    /// `{1/(4L), 1/(2L), 1/L, 2/L, 4/L, 8/L}`.
    Grid,
}

pub const GRID_MULTIPLIERS: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

impl std::str::FromStr for GammaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(GammaSpec::Auto),
            "grid" => Ok(GammaSpec::Grid),
            v => match v.parse::<f64>() {
                Ok(g) if g > 0.0 && g.is_finite() => Ok(GammaSpec::Value(g)),
                _ => Err(Error::Usage(format!("--gamma expects a positive number, auto or grid, got '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum X0Spec {
    Zeros,
    Explicit(Vec<f64>),
    Gaussian(f64),
}

impl std::str::FromStr for X0Spec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "zeros" {
            return Ok(X0Spec::Zeros);
        }
        if let Some(rest) = s.strip_prefix("explicit:") {
            return parse_list(rest).map(X0Spec::Explicit);
        }
        if let Some(rest) = s.strip_prefix("gaussian:") {
            return match rest.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(X0Spec::Gaussian(v)),
                _ => Err(Error::Usage(format!("bad gaussian scale in '{s}'"))),
            };
        }
        Err(Error::Usage(format!("--x0 expects zeros, explicit:v1,v2,... or gaussian:SCALE, got '{s}'")))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(Error::Usage(format!("bad number list '{s}'"))),
    }
}

/// Initial shift for every node; only Clip21-Avg may override the zero default.
#[derive(Debug, Clone, PartialEq)]
pub enum VInitSpec {
    Zeros,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub problem: ProblemKind,
    pub data: Option<PathBuf>,
    pub nodes: usize,
    pub tau: f64,
    pub gamma: GammaSpec,
    pub sigma: f64,
    pub nu: f64,
    pub mu: Option<f64>,
    pub lambda: f64,
    pub reg: Regularizer,
    pub iters: usize,
    pub seed: u64,
    pub compressor: Option<Compressor>,
    pub out: Option<PathBuf>,
    pub x0: Option<X0Spec>,
    pub beta_q: f64,
    pub alpha_q: f64,
    pub l_override: Option<f64>,
    pub presolve_iters: usize,
    pub v_init: VInitSpec,
    pub wall_clock: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// gd, clip-gd, clip21-avg, clip21-gd, dp-clip-gd, dp-clip21-gd or press-clip21-gd
    #[arg(long)]
    pub method: Option<String>,
    /// logistic, linreg or quad-counterexample
    #[arg(long)]
    pub problem: Option<String>,
    /// LibSVM file (required for logistic and linreg)
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// A positive value, `auto` or `grid`
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// PL constant, needed by the DP stepsize rule
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// l2 or nonconvex
    #[arg(long)]
    pub reg: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// identity or topk:K
    #[arg(long)]
    pub compressor: Option<String>,
    /// CSV path for the trace; the summary goes next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// zeros, explicit:v1,v2,... or gaussian:SCALE
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long = "beta-q")]
    pub beta_q: Option<f64>,
    #[arg(long = "alpha-q")]
    pub alpha_q: Option<f64>,
    /// Replace the averaged smoothness bound L
    #[arg(long = "l-override")]
    pub l_override: Option<f64>,
    /// GD iterations used to estimate f_inf on data problems
    #[arg(long = "presolve-iters")]
    pub presolve_iters: Option<usize>,
    /// zeros or explicit:v1,v2,... (clip21-avg only)
    #[arg(long = "v-init")]
    pub v_init: Option<String>,
    /// Record elapsed time (makes output non-reproducible)
    #[arg(long = "wall-clock")]
    pub wall_clock: bool,
    /// key = value file; command-line flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    #[arg(long = "positive-frac", default_value_t = 0.45)]
    pub positive_frac: f64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run one experiment (the default when no subcommand is given)
    Run(Box<RunArgs>),
    /// Write a synthetic two-class LibSVM file
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Parser)]
#[command(name = "clip21", version, about = "Clipped error-feedback methods for distributed optimization")]
#[command(args_conflicts_with_subcommands = true, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

/// What the binary was asked to do.
#[derive(Debug, Clone)]
pub enum Invocation {
    Run(RunConfig),
    Synth(SynthArgs),
}

const BOOL_KEYS: [&str; 1] = ["wall-clock"];

/// Reads a `key = value` file into flag tokens.
pub fn config_file_tokens(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    config_text_tokens(&text)
}

pub fn config_text_tokens(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" {
            return Err(Error::Usage(format!("config line {}: invalid key '{k}'", i + 1)));
        }
        if BOOL_KEYS.contains(&k) {
            match v {
                "true" => out.push(format!("--{k}")),
                "false" => {}
                _ => return Err(Error::Usage(format!("config line {}: {k} expects true or false", i + 1))),
            }
        } else {
            out.push(format!("--{k}"));
            out.push(v.to_string());
        }
    }
    Ok(out)
}

fn find_config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Parses a full argument vector (program name first). `--help` and
/// `--version` come back as `Err(clap::Error)` so the caller can print them.
pub fn parse_invocation(argv: &[String]) -> std::result::Result<Result<Invocation>, clap::Error> {
    let mut argv = argv.to_vec();
    if let Some(path) = find_config_path(&argv) {
        let tokens = match config_file_tokens(&path) {
            Ok(t) => t,
            Err(e) => return Ok(Err(e)),
        };
        // after the program name and an optional `run`
        let at = if argv.get(1).map(String::as_str) == Some("run") { 2 } else { 1 };
        let at = at.min(argv.len());
        argv.splice(at..at, tokens);
    }
    let cli = Cli::try_parse_from(&argv)?;
    Ok(match cli.command {
        Some(Command::Synth(s)) => Ok(Invocation::Synth(s)),
        Some(Command::Run(r)) => RunConfig::from_args(&r).map(Invocation::Run),
        None => RunConfig::from_args(&cli.run).map(Invocation::Run),
    })
}

/// Convenience wrapper mapping every clap failure to a usage error.
pub fn parse_config(argv: &[String]) -> Result<RunConfig> {
    match parse_invocation(argv) {
        Ok(Ok(Invocation::Run(c))) => Ok(c),
        Ok(Ok(Invocation::Synth(_))) => Err(Error::Usage("expected a run configuration".into())),
        Ok(Err(e)) => Err(e),
        Err(e) => Err(Error::Usage(e.to_string())),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self> {
        let method: Method = a.method.as_deref().ok_or_else(|| usage("--method is required"))?.parse()?;
        let problem: ProblemKind = match a.problem.as_deref() {
            Some(p) => p.parse()?,
            None if a.data.is_some() => ProblemKind::Logistic,
            None => return Err(usage("--problem is required when no --data is given")),
        };
        let is_quad = problem == ProblemKind::QuadCounterexample;
        if !is_quad && a.data.is_none() {
            return Err(usage(format!("--data is required for the {problem} problem")));
        }
        if is_quad && a.data.is_some() {
            return Err(usage("--data cannot be combined with the quad-counterexample problem"));
        }
        let nodes = match (is_quad, a.nodes) {
            (true, Some(n)) if n != 2 => return Err(usage("the quad-counterexample problem has exactly 2 nodes")),
            (true, _) => 2,
            (false, Some(0)) => return Err(usage("--nodes must be >= 1")),
            (false, n) => n.unwrap_or(10),
        };
        let tau = match (method, a.tau) {
            (_, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return Err(usage(format!("--tau must be positive, got {t}")))
            }
            (_, Some(t)) => t,
            (Method::Gd, None) => f64::INFINITY,
            (_, None) => return Err(usage(format!("--tau is required for {method}"))),
        };
        let gamma: GammaSpec = a.gamma.as_deref().unwrap_or("auto").parse()?;
        let sigma = a.sigma.unwrap_or(0.0);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(usage(format!("--sigma must be >= 0, got {sigma}")));
        }
        let nu = match (method.is_dp(), a.nu) {
            (_, Some(v)) if !(v > 0.0 && v.is_finite()) => {
                return Err(usage(format!("--nu must be positive, got {v}")))
            }
            (_, Some(v)) => v,
            (true, None) => return Err(usage(format!("--nu is required for {method}"))),
            (false, None) => 0.0,
        };
        if let Some(mu) = a.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(usage(format!("--mu must be positive, got {mu}")));
            }
        }
        if method == Method::DpClip21Gd && gamma == GammaSpec::Auto && a.mu.is_none() {
            return Err(usage("--gamma auto for dp-clip21-gd needs --mu"));
        }
        let lambda = a.lambda.unwrap_or(0.0);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(usage(format!("--lambda must be >= 0, got {lambda}")));
        }
        let reg: Regularizer = match a.reg.as_deref() {
            Some(r) => r.parse()?,
            None if problem == ProblemKind::Linreg => Regularizer::Nonconvex,
            None => Regularizer::L2,
        };
        let iters = a.iters.unwrap_or(1000);
        if iters == 0 {
            return Err(usage("--iters must be >= 1"));
        }
        let compressor = a.compressor.as_deref().map(str::parse::<Compressor>).transpose()?;
        if method == Method::PressClip21Gd && compressor.is_none() {
            return Err(usage("press-clip21-gd requires --compressor"));
        }
        let x0 = a.x0.as_deref().map(str::parse::<X0Spec>).transpose()?;
        let v_init = match a.v_init.as_deref() {
            None | Some("zeros") => VInitSpec::Zeros,
            Some(s) if method == Method::Clip21Avg => match s.strip_prefix("explicit:") {
                Some(rest) => VInitSpec::Explicit(parse_list(rest)?),
                None => return Err(usage(format!("--v-init expects zeros or explicit:..., got '{s}'"))),
            },
            Some(_) => return Err(usage("--v-init is only supported for clip21-avg")),
        };
        let beta_q = a.beta_q.unwrap_or(2.0);
        let alpha_q = a.alpha_q.unwrap_or(1.0);
        if is_quad && !(alpha_q > 0.0 && beta_q > alpha_q && beta_q.is_finite()) {
            return Err(usage("quad-counterexample needs --beta-q > --alpha-q > 0"));
        }
        if let Some(l) = a.l_override {
            if !(l > 0.0 && l.is_finite()) {
                return Err(usage(format!("--l-override must be positive, got {l}")));
            }
        }
        Ok(RunConfig {
            method,
            problem,
            data: a.data.clone(),
            nodes,
            tau,
            gamma,
            sigma,
            nu,
            mu: a.mu,
            lambda,
            reg,
            iters,
            seed: a.seed.unwrap_or(0),
            compressor,
            out: a.out.clone(),
            x0,
            beta_q,
            alpha_q,
            l_override: a.l_override,
            presolve_iters: a.presolve_iters.unwrap_or(100_000),
            v_init,
            wall_clock: a.wall_clock,
        })
    }
}
