//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(master_seed, stream, step, index)`, so
//! node `i`'s noise at step `k` never depends on how many draws other nodes
//! made or in which order nodes were evaluated. Uniforms come from a
//! SplitMix64-style mixer over the packed counter; normals use Box–Muller.

use crate::vector::Vector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of the full counter tuple.
#[inline]
fn counter_hash(seed: u64, stream: u64, step: u64, index: u64) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64(h ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(GOLDEN));
    h = mix64(h ^ step.wrapping_mul(0xA076_1D64_78BD_642F).wrapping_add(GOLDEN));
    mix64(h ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB).wrapping_add(GOLDEN))
}

/// Uniform in (0, 1]: never exactly zero, so `ln` is safe.
#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [0, 1).
#[inline]
fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Replayable source of Gaussian noise, split into independent substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    master_seed: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64) -> Self {
        NoiseStream { master_seed }
    }

    pub fn seed(&self) -> u64 {
        self.master_seed
    }

    /// `d` i.i.d. N(0, sigma²) components for substream `stream` at step `step`.
    pub fn gaussian(&self, stream: u64, step: u64, sigma: f64, d: usize) -> Vector {
        let mut out = vec![0.0; d];
        if sigma == 0.0 {
            return Vector::from_raw(out);
        }
        for pair in 0..d.div_ceil(2) {
            let p = pair as u64;
            let u1 = unit_open_closed(counter_hash(self.master_seed, stream, step, 2 * p));
            let u2 = unit_closed_open(counter_hash(self.master_seed, stream, step, 2 * p + 1));
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = std::f64::consts::TAU * u2;
            out[2 * pair] = sigma * r * theta.cos();
            if 2 * pair + 1 < d {
                out[2 * pair + 1] = sigma * r * theta.sin();
            }
        }
        Vector::from_raw(out)
    }

    /// A single uniform draw in [0, 1), used by the synthetic data generator.
    pub fn uniform(&self, stream: u64, step: u64, index: u64) -> f64 {
        unit_closed_open(counter_hash(self.master_seed, stream, step, index))
    }
}

/// `d` Gaussian components with standard deviation `sigma` from node
/// `stream`'s substream at step `step`.
pub fn gaussian_sample(noise: &NoiseStream, stream: u64, step: u64, sigma: f64, d: usize) -> Vector {
    noise.gaussian(stream, step, sigma, d)
}
