//! Per-op gradient checks, shared by the gradient tests and the acceptance
//! suite.
//!
//! Inputs are drawn so that every partial derivative is well away from zero:
//! with `f32` outputs and ε = 1e-3 the finite-difference round-off is about
//! `4e-5·|y|`, which a near-zero partial cannot absorb in a relative bound.

use faceage::tensor::{grad_check, GradCheckInput};
use faceage::{Graph, Result, Tensor, Var};

use GradCheckInput::{KinkFree, Range};

pub const SEEDS: [u64; 3] = [11, 23, 37];
pub const TOL: f32 = 1e-3;

type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

pub struct OpCase {
    pub name: &'static str,
    op: OpFn,
    inputs: Vec<GradCheckInput>,
    pub tol: f32,
}

impl OpCase {
    fn new(
        name: &'static str,
        op: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static,
        inputs: Vec<GradCheckInput>,
    ) -> Self {
        OpCase { name, op: Box::new(op), inputs, tol: TOL }
    }

    /// Worst relative error for each seed.
    pub fn errors(&self) -> Vec<(u64, f32)> {
        SEEDS.iter().map(|&s| (s, grad_check(&self.op, &self.inputs, s).unwrap())).collect()
    }
}

fn positive(shape: &[usize]) -> GradCheckInput {
    Range(shape.to_vec(), 0.5, 1.5)
}

/// `Σ ±sᵢ` with alternating signs, so `∂/∂xⱼ = sⱼ(±1 − s̄)` stays large.
fn alternating_sum(g: &mut Graph, x: Var) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let w = g.constant(Tensor::new(shape, w)?);
    let m = g.mul(x, w)?;
    Ok(g.sum(m))
}

fn softmax_sum(g: &mut Graph, v: &[Var]) -> Result<Var> {
    let s = g.softmax(v[0]);
    alternating_sum(g, s)
}

pub fn op_cases() -> Vec<OpCase> {
    let mut matmul = OpCase::new("matmul", |g, v| g.matmul(v[0], v[1]), vec![positive(&[3, 2]), positive(&[2, 4])]);
    matmul.tol = 1e-4;
    vec![
        matmul,
        OpCase::new(
            "conv2d",
            |g, v| g.conv2d(v[0], v[1], v[2], 1, 1),
            vec![positive(&[2, 5, 5]), positive(&[3, 2, 3, 3]), positive(&[3])],
        ),
        OpCase::new(
            "conv2d strided batch",
            |g, v| g.conv2d(v[0], v[1], v[2], 2, 1),
            vec![positive(&[2, 2, 6, 5]), positive(&[2, 2, 3, 3]), positive(&[2])],
        ),
        OpCase::new("maxpool2d", |g, v| g.maxpool2d(v[0], 2, 2), vec![KinkFree(vec![2, 4, 6])]),
        OpCase::new("maxpool2d overlapping", |g, v| g.maxpool2d(v[0], 3, 1), vec![KinkFree(vec![1, 5, 5])]),
        OpCase::new("relu", |g, v| Ok(g.relu(v[0])), vec![KinkFree(vec![3, 7])]),
        OpCase::new("softmax", softmax_sum, vec![Range(vec![6], -0.5, 0.5)]),
        OpCase::new("softmax rows", softmax_sum, vec![Range(vec![3, 4], -0.5, 0.5)]),
        OpCase::new(
            "mse_loss",
            |g, v| g.mse_loss(v[0], v[1]),
            vec![positive(&[8]), Range(vec![8], -1.5, -0.5)],
        ),
        // probabilities must stay normalized under perturbation, so the
        // check runs through softmax
        OpCase::new(
            "cross_entropy_loss",
            |g, v| {
                let p = g.softmax(v[0]);
                g.cross_entropy_loss(p, &[1, 0])
            },
            vec![Range(vec![2, 3], -0.5, 0.5)],
        ),
        OpCase::new(
            "dense",
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                let y = g.add_row_bias(y, v[2])?;
                Ok(g.relu(y))
            },
            vec![positive(&[2, 6]), positive(&[6, 4]), positive(&[4])],
        ),
    ]
}
