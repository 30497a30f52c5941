//! Elementary vector operators: the clipping projection and contractive
//! compressors.
//!
//! `clip` is the Euclidean projection onto the ball of radius `tau`. The
//! boundary case `‖x‖ = tau` goes through the identity branch, so the output
//! is a bit-exact copy of the input whenever the input is already inside the
//! ball and no `tau / ‖x‖` ratio is ever formed for such inputs (in
//! particular for the zero vector).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vector::{check_finite, norm, ClipThreshold, Vector};

/// Projects `x` onto the ball of radius `tau`.
pub fn clip(x: &[f64], tau: ClipThreshold) -> Result<Vector> {
    check_finite(x, "clip input")?;
    Ok(Vector::from_raw(clip_with_norm(x, tau.get()).0))
}

/// Clip that also reports `‖x‖` and whether the rescaling branch was taken.
pub(crate) fn clip_with_norm(x: &[f64], tau: f64) -> (Vec<f64>, f64, bool) {
    let nx = norm(x);
    if nx <= tau {
        (x.to_vec(), nx, false)
    } else {
        // τ·(x/‖x‖) rather than (τ/‖x‖)·x: in one dimension x/‖x‖ is exactly ±1,
        // so clipped scalars land on ±τ without rounding
        (x.iter().map(|v| tau * (v / nx)).collect(), nx, true)
    }
}

/// `‖clip(x, tau) − x‖`, computed in closed form as `max{0, ‖x‖ − tau}`.
pub fn clip_residual_norm(x: &[f64], tau: ClipThreshold) -> Result<f64> {
    check_finite(x, "clip input")?;
    Ok((norm(x) - tau.get()).max(0.0))
}

/// Deterministic contractive compressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compressor {
    Identity,
    /// Keep the `k` largest-magnitude coordinates.
    TopK(usize),
}

impl Compressor {
    /// Contraction parameter `alpha` on dimension `d`: `‖C(x) − x‖² ≤ (1 − alpha)‖x‖²`.
    pub fn alpha(&self, d: usize) -> Result<f64> {
        self.validate(d)?;
        Ok(match *self {
            Compressor::Identity => 1.0,
            Compressor::TopK(k) => k as f64 / d as f64,
        })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            Compressor::Identity => Ok(()),
            Compressor::TopK(0) => Err(Error::config("top-k requires k >= 1")),
            Compressor::TopK(k) if k > d => Err(Error::config(format!("top-k with k = {k} exceeds dimension d = {d}"))),
            Compressor::TopK(_) => Ok(()),
        }
    }

    /// Indices kept by the compressor, ascending. Ties in magnitude keep the
    /// lower index.
    pub(crate) fn kept_indices(&self, x: &[f64]) -> Vec<usize> {
        match *self {
            Compressor::Identity => (0..x.len()).collect(),
            Compressor::TopK(k) if k >= x.len() => (0..x.len()).collect(),
            Compressor::TopK(k) => {
                let mut idx: Vec<usize> = (0..x.len()).collect();
                // stable sort: equal magnitudes stay in index order
                idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
                idx.truncate(k);
                idx.sort_unstable();
                idx
            }
        }
    }
}

impl fmt::Display for Compressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compressor::Identity => write!(f, "identity"),
            Compressor::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

impl FromStr for Compressor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(Compressor::Identity);
        }
        if let Some(k) = s.strip_prefix("topk:") {
            let k: usize = k.parse().map_err(|_| Error::Usage(format!("bad top-k size in compressor '{s}'")))?;
            if k == 0 {
                return Err(Error::Usage("top-k requires k >= 1".into()));
            }
            return Ok(Compressor::TopK(k));
        }
        Err(Error::Usage(format!("unknown compressor '{s}' (expected identity or topk:K)")))
    }
}

/// Applies the compressor to `x`.
pub fn compress(c: &Compressor, x: &[f64]) -> Result<Vector> {
    c.validate(x.len())?;
    check_finite(x, "compress input")?;
    Ok(Vector::from_raw(compress_raw(c, x)))
}

pub(crate) fn compress_raw(c: &Compressor, x: &[f64]) -> Vec<f64> {
    match c {
        Compressor::Identity => x.to_vec(),
        Compressor::TopK(_) => {
            let mut out = vec![0.0; x.len()];
            for j in c.kept_indices(x) {
                out[j] = x[j];
            }
            out
        }
    }
}
