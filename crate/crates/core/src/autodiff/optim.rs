use alloc::vec::Vec;

use super::{ParamStore, Real, Tensor, TensorError};

/// Adaptive-moment optimizer settings with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        };
        OptimizerState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update of every trainable parameter, then zero all gradients.
pub fn adam_step<T: Real>(
    store: &mut ParamStore<T>,
    state: &mut OptimizerState<T>,
) -> Result<(), TensorError> {
    if store.is_empty() {
        return Err(TensorError::EmptyParams);
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let correct1 = T::lit(1.0 - libm::pow(c.beta1, t as f64));
    let correct2 = T::lit(1.0 - libm::pow(c.beta2, t as f64));
    let (lr, eps, decay) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.weight_decay));
    for ((p, m), v) in store
        .iter_mut()
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        if p.trainable {
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                let mi = &mut m.data_mut()[i];
                *mi = b1 * *mi + (T::one() - b1) * g;
                let vi = &mut v.data_mut()[i];
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mhat = m.data()[i] / correct1;
                let vhat = v.data()[i] / correct2;
                values[i] -= lr * (mhat / (vhat.sqrt() + eps) + decay * values[i]);
            }
        }
        p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
    }
    Ok(())
}
