//! Stepsize bounds, Lyapunov functions and the other closed-form constants
//! behind the Clip21 convergence and privacy guarantees.
//!
//! Several stepsize conditions have the shape `γ ≤ φ_0 / (B − t)²` where
//! `φ_0` itself depends on `γ` through the Lyapunov weight `A`. Writing
//! `φ_0 = F_0 + c·γ`, the condition is linear in `γ` and is solved directly:
//! it is vacuous when `B ≤ t` or `c ≥ (B − t)²`, otherwise `γ ≤ F_0 / ((B − t)² − c)`.
//! Here `c` uses the noiseless, uncompressed shift error `max{0, ‖∇f_i(x_0)‖ − τ}`
//! after the first step from `v_{-1} = 0`.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::vector::Vector;

const ONE_MINUS_INV_SQRT2: f64 = 1.0 - 1.0 / SQRT_2;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepsizeInputs {
    pub l: f64,
    pub l_max: f64,
    pub tau: f64,
    /// `‖∇f_i(x_0)‖` for every node.
    pub grad0_norms: Vec<f64>,
    /// `f(x_0) − f_inf`.
    pub f0: f64,
    pub alpha_press: Option<f64>,
    pub mu: Option<f64>,
    /// DP noise clip radius; treated as 0 when absent.
    pub nu: Option<f64>,
}

impl StepsizeInputs {
    pub fn new(l: f64, l_max: f64, tau: f64, grad0_norms: Vec<f64>, f0: f64) -> Self {
        StepsizeInputs { l, l_max, tau, grad0_norms, f0, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::config(format!("L must be positive and finite, got {}", self.l)));
        }
        if !(self.l_max > 0.0 && self.l_max.is_finite()) {
            return Err(Error::config(format!("L_max must be positive and finite, got {}", self.l_max)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.f0 >= 0.0 && self.f0.is_finite()) {
            return Err(Error::config(format!("F_0 must be finite and >= 0, got {}", self.f0)));
        }
        if self.grad0_norms.is_empty() {
            return Err(Error::config("need at least one initial gradient norm"));
        }
        if self.grad0_norms.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::config("initial gradient norms must be finite and >= 0"));
        }
        Ok(())
    }

    fn b(&self) -> f64 {
        self.grad0_norms.iter().cloned().fold(0.0, f64::max)
    }

    fn mean_sq<F: Fn(f64) -> f64>(&self, term: F) -> f64 {
        self.grad0_norms.iter().map(|&g| term(g).powi(2)).sum::<f64>() / self.grad0_norms.len() as f64
    }
}

/// A stepsize bound together with the pieces it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeBreakdown {
    pub gamma: f64,
    /// Every candidate bound, `+∞` for vacuous ones, in the order listed by
    /// the corresponding rule.
    pub branches: Vec<f64>,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Contraction coefficient of the compressed variant, with the
    /// `(θ_1, θ_2)` that achieved it.
    pub press: Option<PressBeta>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressBeta {
    pub beta: f64,
    pub theta1: f64,
    pub theta2: f64,
}

fn min_of(branches: &[f64]) -> f64 {
    branches.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `min{1, τ / max_i g_i}`, and 1 when every norm is zero.
pub fn eta_of(tau: f64, grad0_norms: &[f64]) -> f64 {
    let b = grad0_norms.iter().cloned().fold(0.0, f64::max);
    if b == 0.0 {
        1.0
    } else {
        (tau / b).min(1.0)
    }
}

/// `1 − (1−η)(1−η/2)`.
fn contraction_gap(eta: f64) -> f64 {
    1.0 - (1.0 - eta) * (1.0 - eta / 2.0)
}

/// Solves `γ(B − t)² ≤ F_0 + c·γ` for the largest `γ`.
fn implicit_branch(inp: &StepsizeInputs, threshold: f64, weight: f64) -> f64 {
    let b = inp.b();
    if b <= threshold {
        return f64::INFINITY;
    }
    let tau = inp.tau;
    let c = weight * inp.mean_sq(|g| (g - tau).max(0.0));
    let denom = (b - threshold).powi(2);
    if c >= denom {
        f64::INFINITY
    } else {
        inp.f0 / (denom - c)
    }
}

/// Largest admissible stepsize for single-node Clip21-GD.
pub fn stepsize_single(inp: &StepsizeInputs) -> Result<StepsizeBreakdown> {
    inp.validate()?;
    if inp.grad0_norms.len() != 1 {
        return Err(Error::config("single-node stepsize needs exactly one gradient norm"));
    }
    let (l, tau, f0) = (inp.l, inp.tau, inp.f0);
    let g0 = inp.grad0_norms[0];
    let eta = eta_of(tau, &inp.grad0_norms);
    let beta1 = (1.0 - eta).powi(2) * (1.0 + 2.0 / eta) / contraction_gap(eta);
    let big_g0 = (g0 - tau).abs();
    let beta2 = f0 + tau * big_g0 / ((2.0 * eta).sqrt() * l);
    let first = ONE_MINUS_INV_SQRT2 / (1.0 + (1.0 + 2.0 * beta1).sqrt());
    let denom = 4.0 * l * (f0.sqrt() + beta2.sqrt()).powi(2);
    let second = if denom == 0.0 { f64::INFINITY } else { tau * tau / denom };
    let branches = vec![first / l, second / l];
    Ok(StepsizeBreakdown { gamma: min_of(&branches), branches, eta, beta1, beta2, press: None })
}

/// Largest admissible stepsize for multi-node Clip21-GD.
pub fn stepsize_multi(inp: &StepsizeInputs) -> Result<StepsizeBreakdown> {
    inp.validate()?;
    let (l, l_max, tau, f0) = (inp.l, inp.l_max, inp.tau, inp.f0);
    let eta = eta_of(tau, &inp.grad0_norms);
    let gap = contraction_gap(eta);
    let ratio = (l_max / l).powi(2);
    let beta1 = 2.0 * (1.0 - eta).powi(2) * (1.0 + 2.0 / eta) / gap * ratio;
    // signed difference, so nodes below tau also contribute
    let big_g0 = inp.mean_sq(|g| g - tau).sqrt();
    let beta2 = f0 + big_g0 * tau / (2.0 * (2.0 * eta).sqrt() * l_max);
    let branches = vec![
        implicit_branch(inp, tau, 1.0 / (2.0 * gap)),
        (ONE_MINUS_INV_SQRT2 / l) / (1.0 + (1.0 + 2.0 * beta1).sqrt()),
        (tau * tau / (l_max * l_max)) / (16.0 * (f0.sqrt() + beta2.sqrt()).powi(2)),
    ];
    Ok(StepsizeBreakdown { gamma: min_of(&branches), branches, eta, beta1, beta2, press: None })
}

/// Largest admissible stepsize for DP-Clip21-GD under a PŁ constant `mu`.
pub fn stepsize_dp(inp: &StepsizeInputs) -> Result<StepsizeBreakdown> {
    inp.validate()?;
    let mu = inp.mu.ok_or_else(|| Error::config("DP stepsize needs the PL constant mu"))?;
    if !(mu > 0.0) {
        return Err(Error::config(format!("mu must be positive, got {mu}")));
    }
    let nu = inp.nu.unwrap_or(0.0);
    if !(nu >= 0.0) {
        return Err(Error::config(format!("nu must be >= 0, got {nu}")));
    }
    let (l, l_max, tau, f0) = (inp.l, inp.l_max, inp.tau, inp.f0);
    let eta = eta_of(tau, &inp.grad0_norms);
    let beta1 = (1.0 + 2.0 / eta) * (1.0 - eta) * (1.0 - eta / 2.0) / eta * (l_max / l).powi(2);
    let big_g0 = inp.mean_sq(|g| (g - tau).abs() + nu).sqrt();
    let beta2 = f0 + tau * big_g0 / (2.0 * (2.0 * eta).sqrt() * l_max);
    let branches = vec![
        eta / (4.0 * mu),
        2.0 * mu / (l_max * l_max),
        implicit_branch(inp, tau / 2.0, 2.0 / eta),
        ONE_MINUS_INV_SQRT2 / (l * (1.0 + (1.0 + 8.0 * beta1).sqrt())),
        tau * tau / (64.0 * l_max * l_max * (f0.sqrt() + beta2.sqrt()).powi(2)),
    ];
    Ok(StepsizeBreakdown { gamma: min_of(&branches), branches, eta, beta1, beta2, press: None })
}

/// The θ grid: 13 log-spaced points from 1e-3 to 10.
fn theta_grid() -> impl Iterator<Item = f64> {
    (0..13).map(|j| 10f64.powf(-3.0 + 4.0 * j as f64 / 12.0))
}

/// Best contraction coefficient of the compressed variant over the θ grid.
pub fn press_beta(alpha: f64, eta: f64) -> Result<PressBeta> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("compressor alpha must lie in (0, 1], got {alpha}")));
    }
    let mut best = PressBeta { beta: f64::NEG_INFINITY, theta1: f64::NAN, theta2: f64::NAN };
    for t1 in theta_grid() {
        for t2 in theta_grid() {
            let b1 = (1.0 - alpha) + (1.0 + 1.0 / t1) * (1.0 + t2) * (1.0 - alpha);
            let b2 = (1.0 + t1) + (1.0 + 1.0 / t1) * (1.0 + 1.0 / t2) * (1.0 - alpha);
            let beta = 1.0 - b1.max(b2 * (1.0 - eta).powi(2));
            if beta > best.beta {
                best = PressBeta { beta, theta1: t1, theta2: t2 };
            }
        }
    }
    if best.beta > 0.0 {
        Ok(best)
    } else {
        Err(Error::Infeasible { best_beta: best.beta })
    }
}

/// First bound of the compressed rule, `(1 − √(1−α)) / (2√(1−α) L_max)`.
pub fn press_first_branch(alpha: f64, l_max: f64) -> f64 {
    let s = (1.0 - alpha).sqrt();
    if s == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - s) / (2.0 * s * l_max)
    }
}

/// Largest admissible stepsize for Press-Clip21-GD.
pub fn stepsize_press(inp: &StepsizeInputs) -> Result<StepsizeBreakdown> {
    inp.validate()?;
    let alpha = inp.alpha_press.ok_or_else(|| Error::config("press stepsize needs the compressor alpha"))?;
    let (l, l_max, tau, f0) = (inp.l, inp.l_max, inp.tau, inp.f0);
    let eta = eta_of(tau, &inp.grad0_norms);
    let pb = press_beta(alpha, eta)?;
    let beta = pb.beta;
    let s = (1.0 - alpha).sqrt();
    let shrink = 1.0 - s;
    let beta1 =
        2.0 * ((1.0 - beta) * (1.0 + 2.0 / beta)).max((1.0 - alpha) * (1.0 + 2.0 / alpha)) / beta * (l_max / l).powi(2);
    let big_g0 = inp.mean_sq(|g| (g - tau).max(0.0) + s * tau).sqrt();
    let beta2 = f0 + big_g0 * shrink * tau / ((2.0 * beta).sqrt() * l_max);
    let branches = vec![
        press_first_branch(alpha, l_max),
        implicit_branch(inp, shrink * tau, 1.0 / beta),
        ONE_MINUS_INV_SQRT2 / (l * (1.0 + (1.0 + 2.0 * beta1).sqrt())),
        shrink * shrink * tau * tau / (16.0 * l_max * l_max * (f0.sqrt() + beta2.sqrt()).powi(2)),
    ];
    Ok(StepsizeBreakdown { gamma: min_of(&branches), branches, eta, beta1, beta2, press: Some(pb) })
}

/// Weight `A` on the shift-error term of the Lyapunov function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub gamma: f64,
    pub eta: f64,
    pub a: f64,
}

impl LyapunovParams {
    /// `A = γ / (2[1 − (1−η)(1−η/2)])`.
    pub fn clip21(gamma: f64, eta: f64) -> Self {
        LyapunovParams { gamma, eta, a: gamma / (2.0 * contraction_gap(eta)) }
    }

    /// `A = 2γ/η`, the weight used with injected noise.
    pub fn dp(gamma: f64, eta: f64) -> Self {
        LyapunovParams { gamma, eta, a: 2.0 * gamma / eta }
    }

    /// `A = γ/β` for the compressed variant.
    pub fn press(gamma: f64, eta: f64, beta: f64) -> Self {
        LyapunovParams { gamma, eta, a: gamma / beta }
    }

    /// No shift term: plain objective gap.
    pub fn objective_only(gamma: f64) -> Self {
        LyapunovParams { gamma, eta: 1.0, a: 0.0 }
    }
}

/// `f(x) − f_inf + (A/n) Σ ‖∇f_i(x) − v^i‖²`.
pub fn lyapunov(problem: &Problem, x: &[f64], v: &[Vector], params: &LyapunovParams, f_inf: f64) -> Result<f64> {
    if v.len() != problem.n() {
        return Err(Error::invalid(format!("{} shift vectors for {} nodes", v.len(), problem.n())));
    }
    let gap = problem.eval_global(x)? - f_inf;
    if params.a == 0.0 {
        return Ok(gap);
    }
    let mut shift = 0.0;
    for (i, vi) in v.iter().enumerate() {
        let g = problem.grad_local(i, x)?;
        shift += crate::vector::dist(&g, vi).powi(2);
    }
    Ok(gap + params.a * shift / problem.n() as f64)
}

/// Iteration after which clipping can no longer be active on a single node:
/// `⌈(2/τ)(‖∇f(x_0)‖ − τ) + 1⌉`, or 0 when the initial gradient is inside the ball.
pub fn k_star(grad0_norm: f64, tau: f64) -> u64 {
    if grad0_norm <= tau {
        0
    } else {
        ((2.0 / tau) * (grad0_norm - tau) + 1.0).ceil() as u64
    }
}

/// `2φ_0 / (γK)`.
pub fn rate_envelope(phi0: f64, gamma: f64, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("rate envelope needs K >= 1"));
    }
    Ok(2.0 * phi0 / (gamma * k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMin {
    pub value: f64,
    /// Always true: only the closed-form floor is evaluated, not the
    /// feasibility condition on `δ` that accompanies it.
    pub delta_condition_unchecked: bool,
}

/// Noise variance floor `12τ²√(2K ln(1/δ)) / ((1−α)ε)`.
pub fn sigma_min(tau: f64, k: u64, eps: f64, delta: f64, alpha_frac: f64) -> Result<SigmaMin> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    if k == 0 {
        return Err(Error::config("K must be >= 1"));
    }
    for (name, v) in [("epsilon", eps), ("delta", delta), ("alpha", alpha_frac)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    let value = 12.0 * tau * tau * (2.0 * k as f64 * (1.0 / delta).ln()).sqrt() / ((1.0 - alpha_frac) * eps);
    Ok(SigmaMin { value, delta_condition_unchecked: true })
}

/// `(1−γμ)^K φ_0 + [2(1 + 2/η)/(ημ)]·σ²_min`.
pub fn dp_utility_bound(phi0: f64, gamma: f64, mu: f64, k: u64, sigma2_min: f64, eta: f64) -> Result<f64> {
    let gm = gamma * mu;
    if !(gm > 0.0 && gm < 1.0) {
        return Err(Error::config(format!("utility bound needs 0 < gamma*mu < 1, got {gm}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::config(format!("eta must lie in (0, 1], got {eta}")));
    }
    let a3 = 2.0 * (1.0 + 2.0 / eta) / (eta * mu);
    let k = i32::try_from(k).map_err(|_| Error::config("K too large"))?;
    Ok((1.0 - gm).powi(k) * phi0 + a3 * sigma2_min)
}
