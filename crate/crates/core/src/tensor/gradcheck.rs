//! Finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Central-difference step.
pub const EPSILON: f32 = 1e-3;

/// How [`grad_check`] samples an input.
#[derive(Clone, Debug)]
pub enum GradCheckInput {
    /// Uniform in `[-1, 1]`.
    Uniform(Vec<usize>),
    /// Uniform in `[lo, hi)`.
    Range(Vec<usize>, f32, f32),
    /// Distinct values with pairwise gaps and magnitudes of at least `1e-2`,
    /// so ReLU and max-pool kinks stay outside the ±ε stencil.
    KinkFree(Vec<usize>),
    /// A fixed point.
    Fixed(Tensor),
}

impl GradCheckInput {
    fn sample(&self, rng: &mut Xoshiro256PlusPlus) -> Tensor {
        match self {
            GradCheckInput::Uniform(shape) => {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
                Tensor::new(shape.clone(), data).unwrap()
            }
            GradCheckInput::Range(shape, lo, hi) => {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(*lo..*hi)).collect();
                Tensor::new(shape.clone(), data).unwrap()
            }
            GradCheckInput::KinkFree(shape) => {
                let n: usize = shape.iter().product();
                let mut data: Vec<f32> = (0..n)
                    .map(|k| {
                        let mag = 0.015 + 0.02 * (k / 2) as f32;
                        if k % 2 == 0 {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect();
                data.shuffle(rng);
                Tensor::new(shape.clone(), data).unwrap()
            }
            GradCheckInput::Fixed(t) => t.clone(),
        }
    }
}

/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks `op` at inputs sampled from `inputs` with `seed`, returning the
/// largest relative error between its backward pass and central differences
/// over every input element.
///
/// Non-scalar outputs are reduced to a scalar with fixed random positive
/// weights (`Σ wᵢ·yᵢ`, `wᵢ ∈ [0.5, 1.5)`); the numeric side evaluates that
/// reduction in `f64`. Ops whose partials cancel under positive weights
/// should return their own scalar.
pub fn grad_check<F>(op: F, inputs: &[GradCheckInput], seed: u64) -> Result<f32>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut points: Vec<Tensor> = inputs.iter().map(|i| i.sample(&mut rng)).collect();

    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|t| g.param(t.clone())).collect();
    let out = op(&mut g, &vars)?;
    let out_shape = g.value(out).shape().to_vec();
    let weights = if g.value(out).len() == 1 {
        Tensor::full(&out_shape, 1.0)
    } else {
        let n = out_shape.iter().product();
        let data = (0..n)
            .map(|_| rng.random_range(0.5f32..1.5))
            .collect();
        Tensor::new(out_shape.clone(), data).unwrap()
    };
    let w = g.constant(weights.clone());
    let weighted = g.mul(out, w)?;
    let loss = g.sum(weighted);
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(&points)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    drop(g);

    let eval = |pts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|t| g.constant(t.clone())).collect();
        let out = op(&mut g, &vars)?;
        Ok(g.value(out)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&y, &w)| y as f64 * w as f64)
            .sum())
    };

    let mut worst = 0.0f64;
    for i in 0..points.len() {
        for j in 0..points[i].len() {
            let numeric = central_difference(eval, &mut points, i, j)?;
            let a = analytic[i].data()[j] as f64;
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst as f32)
}

/// Central difference of `f` along element `elem` of input `input`.
///
/// The divisor is the exact distance between the two rounded `f32` points,
/// not `2ε`.
pub fn central_difference<F>(f: F, points: &mut [Tensor], input: usize, elem: usize) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let x = points[input].data()[elem];
    let hi = x + EPSILON;
    let lo = x - EPSILON;
    points[input].data_mut()[elem] = hi;
    let f_hi = f(points);
    points[input].data_mut()[elem] = lo;
    let f_lo = f(points);
    points[input].data_mut()[elem] = x;
    Ok((f_hi? - f_lo?) / (hi as f64 - lo as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_exact_gradient() {
        let err = grad_check(
            |_, v| Ok(v[0]),
            &[GradCheckInput::Uniform(vec![5])],
            1,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn kink_free_samples_are_separated() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let t = GradCheckInput::KinkFree(vec![4, 5]).sample(&mut rng);
        let mut v: Vec<f32> = t.data().to_vec();
        assert!(v.iter().all(|x| x.abs() >= 1e-2));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(v.windows(2).all(|w| w[1] - w[0] >= 1e-2));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-12);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    }
}
