use num_traits::Float;

use super::TrainConfig;
use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters in the working precision `F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Float> AdamHyper<F> {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        let cast = |v: f64| F::from(v).expect("hyperparameter fits the float type");
        AdamHyper {
            lr: cast(cfg.learning_rate),
            beta1: cast(cfg.beta1),
            beta2: cast(cfg.beta2),
            epsilon: cast(cfg.epsilon),
        }
    }

    /// `(1 − β1^t, 1 − β2^t)` for step `t ≥ 1`.
    pub fn bias_corrections(&self, t: u64) -> (F, F) {
        let t = i32::try_from(t).unwrap_or(i32::MAX);
        (F::one() - self.beta1.powi(t), F::one() - self.beta2.powi(t))
    }

    /// One element of a bias-corrected Adam step; `m` and `v` are updated in
    /// place and the new parameter value is returned.
    #[inline]
    pub fn update(&self, theta: F, g: F, m: &mut F, v: &mut F, corrections: (F, F)) -> F {
        *m = self.beta1 * *m + (F::one() - self.beta1) * g;
        *v = self.beta2 * *v + (F::one() - self.beta2) * g * g;
        let m_hat = *m / corrections.0;
        let v_hat = *v / corrections.1;
        theta - self.lr * m_hat / (v_hat.sqrt() + self.epsilon)
    }
}

/// First and second moments, shaped like the parameters, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One Adam step over every tensor, in `f32`.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return dim_err(format!(
            "{} parameters, {} gradients, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return dim_err(format!(
                "tensor {i}: parameter {:?}, gradient {:?}, moments {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            ));
        }
    }
    let hyper = AdamHyper::<f32>::from_config(cfg);
    state.t += 1;
    let corr = hyper.bias_corrections(state.t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v.iter_mut()) {
            *theta = hyper.update(*theta, gi, mi, vi, corr);
        }
    }
    Ok(())
}
