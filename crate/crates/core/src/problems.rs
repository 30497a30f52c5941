//! Objective families: distributed logistic regression, least squares with a
//! nonconvex regularizer, and a two-node quadratic on which plain clipped GD
//! stalls.
//!
//! Every `f_i` includes the regularizer, so `f = (1/n) Σ f_i` carries it
//! exactly once.

use std::fmt;
use std::str::FromStr;

use crate::data::{DenseMatrix, NodeShard};
use crate::error::{Error, Result};
use crate::vector::{check_finite, dot, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Logistic,
    Linreg,
    QuadCounterexample,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Logistic => "logistic",
            ProblemKind::Linreg => "linreg",
            ProblemKind::QuadCounterexample => "quad-counterexample",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ProblemKind::Logistic),
            "linreg" | "linreg-nonconvex" => Ok(ProblemKind::Linreg),
            "quad-counterexample" | "quad" => Ok(ProblemKind::QuadCounterexample),
            _ => Err(Error::Usage(format!("unknown problem '{s}' (expected logistic, linreg or quad-counterexample)"))),
        }
    }
}

/// `L2` is `r(x) = ½‖x‖²`; `Nonconvex` is `r(x) = Σ x_j²/(1 + x_j²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L2,
    Nonconvex,
}

impl Regularizer {
    /// Uniform bound on the regularizer's per-coordinate curvature.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Regularizer::L2 => 1.0,
            // |d²/dt² t²/(1+t²)| = |2 − 6t²|/(1+t²)³ peaks at t = 0
            Regularizer::Nonconvex => 2.0,
        }
    }

    fn value(self, x: &[f64]) -> f64 {
        match self {
            Regularizer::L2 => 0.5 * dot(x, x),
            Regularizer::Nonconvex => x.iter().map(|t| t * t / (1.0 + t * t)).sum(),
        }
    }

    fn add_grad(self, x: &[f64], lambda: f64, out: &mut [f64]) {
        match self {
            Regularizer::L2 => {
                for (o, t) in out.iter_mut().zip(x) {
                    *o += lambda * t;
                }
            }
            Regularizer::Nonconvex => {
                for (o, t) in out.iter_mut().zip(x) {
                    let s = 1.0 + t * t;
                    *o += lambda * 2.0 * t / (s * s);
                }
            }
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::L2 => "l2",
            Regularizer::Nonconvex => "nonconvex",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Regularizer::L2),
            "nonconvex" => Ok(Regularizer::Nonconvex),
            _ => Err(Error::Usage(format!("unknown regularizer '{s}' (expected l2 or nonconvex)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessInfo {
    pub l_i: Vec<f64>,
    pub l: f64,
    pub l_max: f64,
    /// PŁ constant; only ever supplied by the caller.
    pub mu: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    kind: ProblemKind,
    shards: Vec<NodeShard>,
    reg: Regularizer,
    lambda: f64,
    quad: Option<(f64, f64)>,
    d: usize,
    smooth: SmoothnessInfo,
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})`, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Largest squared singular value of `a`, by power iteration on `AᵀA`.
pub fn spectral_norm_sq(a: &DenseMatrix) -> f64 {
    let d = a.cols();
    if d == 0 || a.rows() == 0 {
        return 0.0;
    }
    // irregular start so it is unlikely to be orthogonal to the top eigenvector
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let nv = crate::vector::norm(&v);
    v.iter_mut().for_each(|c| *c /= nv);

    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..200 {
        w.iter_mut().for_each(|c| *c = 0.0);
        for row in a.iter_rows() {
            let s = dot(row, &v);
            for (wj, aj) in w.iter_mut().zip(row) {
                *wj += s * aj;
            }
        }
        let next = dot(&w, &v);
        let nw = crate::vector::norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / nw;
        }
        let done = (next - lambda).abs() <= 1e-8 * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    // one more Rayleigh quotient with the normalized vector
    let mut q = 0.0;
    for row in a.iter_rows() {
        let s = dot(row, &v);
        q += s * s;
    }
    q.max(lambda)
}

impl Problem {
    pub fn logistic(shards: Vec<NodeShard>, reg: Regularizer, lambda: f64) -> Result<Self> {
        Self::from_shards(ProblemKind::Logistic, shards, reg, lambda)
    }

    pub fn linreg(shards: Vec<NodeShard>, reg: Regularizer, lambda: f64) -> Result<Self> {
        Self::from_shards(ProblemKind::Linreg, shards, reg, lambda)
    }

    /// Two nodes on the real line: `f_1 = (β/2)x²`, `f_2 = −(α/2)x²`.
    ///
    /// The global smoothness constant is reported as `β − α`, the curvature
    /// of `f_1 + f_2`; the mean `f` has half that, so the bound is loose by 2.
    pub fn quad_counterexample(beta_q: f64, alpha_q: f64) -> Result<Self> {
        if !(alpha_q > 0.0 && beta_q > alpha_q && beta_q.is_finite()) {
            return Err(Error::config(format!(
                "counterexample needs beta_q > alpha_q > 0, got beta_q = {beta_q}, alpha_q = {alpha_q}"
            )));
        }
        Ok(Problem {
            kind: ProblemKind::QuadCounterexample,
            shards: Vec::new(),
            reg: Regularizer::L2,
            lambda: 0.0,
            quad: Some((beta_q, alpha_q)),
            d: 1,
            smooth: SmoothnessInfo { l_i: vec![beta_q, alpha_q], l: beta_q - alpha_q, l_max: beta_q, mu: None },
        })
    }

    fn from_shards(kind: ProblemKind, shards: Vec<NodeShard>, reg: Regularizer, lambda: f64) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::config("problem needs at least one shard"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let d = shards[0].dim();
        if d == 0 {
            return Err(Error::config("feature dimension is zero"));
        }
        for s in &shards {
            if s.is_empty() {
                return Err(Error::config(format!("shard {} is empty", s.node_id)));
            }
            if s.dim() != d {
                return Err(Error::config(format!("shard {} has dimension {}, expected {d}", s.node_id, s.dim())));
            }
        }
        let reg_l = lambda * reg.curvature_bound();
        let l_i: Vec<f64> = shards
            .iter()
            .map(|s| {
                let m = s.len() as f64;
                let a2 = spectral_norm_sq(&s.features);
                match kind {
                    ProblemKind::Logistic => a2 / (4.0 * m) + reg_l,
                    _ => 2.0 * a2 / m + reg_l,
                }
            })
            .collect();
        let l = l_i.iter().sum::<f64>() / l_i.len() as f64;
        let l_max = l_i.iter().cloned().fold(0.0, f64::max);
        Ok(Problem { kind, shards, reg, lambda, quad: None, d, smooth: SmoothnessInfo { l_i, l, l_max, mu: None } })
    }

    /// Replaces the global smoothness constant used by stepsize rules.
    pub fn with_l_override(mut self, l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::config(format!("L override must be positive, got {l}")));
        }
        self.smooth.l = l;
        Ok(self)
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config(format!("mu must be positive, got {mu}")));
        }
        self.smooth.mu = Some(mu);
        Ok(self)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        match self.kind {
            ProblemKind::QuadCounterexample => 2,
            _ => self.shards.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn regularizer(&self) -> Regularizer {
        self.reg
    }

    pub fn shards(&self) -> &[NodeShard] {
        &self.shards
    }

    pub fn smoothness(&self) -> &SmoothnessInfo {
        &self.smooth
    }

    fn check(&self, i: usize, x: &[f64]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::invalid(format!("node index {i} out of range (n = {})", self.n())));
        }
        if x.len() != self.d {
            return Err(Error::invalid(format!("point has dimension {}, expected {}", x.len(), self.d)));
        }
        check_finite(x, "point")
    }

    pub fn grad_local(&self, i: usize, x: &[f64]) -> Result<Vector> {
        self.check(i, x)?;
        let mut g = vec![0.0; self.d];
        self.grad_local_into(i, x, &mut g);
        Vector::new(g)
    }

    pub fn eval_local(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check(i, x)?;
        Ok(self.eval_local_unchecked(i, x))
    }

    /// Mean of the local gradients, summed in ascending node order.
    pub fn grad_global(&self, x: &[f64]) -> Result<Vector> {
        self.check(0, x)?;
        let mut acc = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for i in 0..self.n() {
            self.grad_local_into(i, x, &mut g);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let inv = 1.0 / self.n() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Vector::new(acc)
    }

    pub fn eval_global(&self, x: &[f64]) -> Result<f64> {
        self.check(0, x)?;
        Ok(self.eval_global_unchecked(x))
    }

    pub(crate) fn eval_global_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = (0..self.n()).map(|i| self.eval_local_unchecked(i, x)).sum();
        s / self.n() as f64
    }

    /// Writes `∇f_i(x)` into `out`; inputs are assumed validated.
    pub(crate) fn grad_local_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if let Some((beta_q, alpha_q)) = self.quad {
            out[0] = if i == 0 { beta_q * x[0] } else { -alpha_q * x[0] };
            return;
        }
        let s = &self.shards[i];
        let inv_m = 1.0 / s.len() as f64;
        for (row, &b) in s.features.iter_rows().zip(&s.labels) {
            let t = dot(row, x);
            let coef = match self.kind {
                ProblemKind::Logistic => -b * sigmoid(-b * t) * inv_m,
                _ => 2.0 * (t - b) * inv_m,
            };
            if coef != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += coef * a;
                }
            }
        }
        if self.lambda != 0.0 {
            self.reg.add_grad(x, self.lambda, out);
        }
    }

    /// `f_i(x)` and `∇f_i(x)` in one pass over the shard.
    pub(crate) fn value_grad_local_into(&self, i: usize, x: &[f64], out: &mut [f64]) -> f64 {
        if self.quad.is_some() {
            self.grad_local_into(i, x, out);
            return self.eval_local_unchecked(i, x);
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let s = &self.shards[i];
        let inv_m = 1.0 / s.len() as f64;
        let mut loss = 0.0;
        for (row, &b) in s.features.iter_rows().zip(&s.labels) {
            let t = dot(row, x);
            let coef = match self.kind {
                ProblemKind::Logistic => {
                    loss += softplus(-b * t);
                    -b * sigmoid(-b * t) * inv_m
                }
                _ => {
                    loss += (t - b) * (t - b);
                    2.0 * (t - b) * inv_m
                }
            };
            if coef != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += coef * a;
                }
            }
        }
        if self.lambda != 0.0 {
            self.reg.add_grad(x, self.lambda, out);
        }
        loss / s.len() as f64 + self.lambda * self.reg.value(x)
    }

    pub(crate) fn eval_local_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        if let Some((beta_q, alpha_q)) = self.quad {
            let c = if i == 0 { beta_q } else { -alpha_q };
            return 0.5 * c * x[0] * x[0];
        }
        let s = &self.shards[i];
        let loss: f64 = s
            .features
            .iter_rows()
            .zip(&s.labels)
            .map(|(row, &b)| {
                let t = dot(row, x);
                match self.kind {
                    ProblemKind::Logistic => softplus(-b * t),
                    _ => (t - b) * (t - b),
                }
            })
            .sum();
        loss / s.len() as f64 + self.lambda * self.reg.value(x)
    }
}
