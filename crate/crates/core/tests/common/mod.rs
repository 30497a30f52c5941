#![allow(dead_code)]

use clip21::data::{prepare_shards, synthetic_classification, DenseMatrix, NodeShard};
use clip21::noise::NoiseStream;
use clip21::optimizers::{run, FInf, IterationRecord, MethodConfig, RunOptions, RunOutput};
use clip21::problems::{Problem, Regularizer};
use clip21::theory::{self, StepsizeInputs};
use clip21::Vector;

/// Label-sorted heterogeneous logistic instance: 10 nodes of 50 samples in
/// d = 20. With 275 negatives and 225 positives, five shards are all -1,
/// four are all +1 and one is mixed.
pub fn logistic_fixture(lambda: f64) -> Problem {
    let ds = synthetic_classification(500, 20, 0.45, 1.0, 7).unwrap();
    let shards = prepare_shards(&ds, 10).unwrap();
    Problem::logistic(shards, Regularizer::L2, lambda).unwrap()
}

pub fn zeros(p: &Problem) -> Vector {
    Vector::zeros(p.dim())
}

pub fn grad_norms(p: &Problem, x: &[f64]) -> Vec<f64> {
    (0..p.n()).map(|i| p.grad_local(i, x).unwrap().norm()).collect()
}

pub fn multi_inputs(p: &Problem, x0: &[f64], tau: f64, f_inf: f64) -> StepsizeInputs {
    let s = p.smoothness();
    let f0 = p.eval_global(x0).unwrap() - f_inf;
    StepsizeInputs::new(s.l, s.l_max, tau, grad_norms(p, x0), f0)
}

pub fn run_plain(cfg: &MethodConfig, p: &Problem, x0: Vector, f_inf: f64, a: f64) -> RunOutput {
    run(cfg, p, x0, RunOptions::new(FInf::Exact(f_inf), a), |_, _| {}).unwrap()
}

pub fn min_grad(trace: &[IterationRecord]) -> f64 {
    trace.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min)
}

pub fn eta(p: &Problem, x0: &[f64], tau: f64) -> f64 {
    theory::eta_of(tau, &grad_norms(p, x0))
}

/// Single-sample least-squares shards `f_i(x) = (a_iᵀx − b_i)²` with
/// `a_i = e_i`, so `‖∇f_i(0)‖ = 2|b_i|` and `f* = 0`.
pub fn unit_quadratic(b: &[f64]) -> Problem {
    let d = b.len();
    let shards = b
        .iter()
        .enumerate()
        .map(|(i, &bi)| {
            let mut row = vec![0.0; d];
            row[i] = 1.0;
            NodeShard::new(i, DenseMatrix::from_rows(&[row], d).unwrap(), vec![bi]).unwrap()
        })
        .collect();
    Problem::linreg(shards, Regularizer::L2, 0.0).unwrap()
}

/// Seeded Gaussian matrix with `rows × cols` entries.
pub fn gaussian_rows(seed: u64, stream: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let s = NoiseStream::new(seed);
    (0..rows).map(|r| s.gaussian(stream, r as u64, 1.0, cols).into_inner()).collect()
}
