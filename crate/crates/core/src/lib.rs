//! Clipped error-feedback methods (Clip21 and relatives) for distributed
//! optimization, simulated on a single machine, together with the stepsize
//! rules and bounds that come with them.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod noise;
pub mod ops;
pub mod optimizers;
pub mod problems;
pub mod theory;
pub mod vector;

pub use error::{Error, Result};
pub use noise::{gaussian_sample, NoiseStream};
pub use ops::{clip, clip_residual_norm, compress, Compressor};
pub use optimizers::{run, IterationRecord, Method, MethodConfig, OptimizerState};
pub use problems::{Problem, ProblemKind, Regularizer, SmoothnessInfo};
pub use vector::{ClipThreshold, Vector};
