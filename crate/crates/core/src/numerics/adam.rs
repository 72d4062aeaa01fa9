use serde::{Deserialize, Serialize};

use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use crate::numerics::NumericsError;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Applies one bias-corrected Adam update to every trainable entry.
///
/// Moment buffers live in the store. `t` is the 1-based step count.
/// Frozen entries are left untouched even when they carry a gradient.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig, t: u64) -> Result<(), NumericsError> {
    if t == 0 {
        return Err(NumericsError::InvalidArgument("adam step count must be >= 1".into()));
    }
    if store.trainable_names().next().is_none() {
        return Err(NumericsError::NothingToOptimize);
    }
    if let Some(missing) = store
        .iter()
        .find(|(_, e)| e.trainable && e.grad.is_none())
        .map(|(n, _)| n.to_string())
    {
        return Err(NumericsError::MissingGradient(missing));
    }

    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    let bc1 = T::one() - T::lit(cfg.beta1.powi(t as i32));
    let bc2 = T::one() - T::lit(cfg.beta2.powi(t as i32));

    for (_, e) in store.entries_mut() {
        if !e.trainable {
            continue;
        }
        let g = e.grad.as_ref().expect("checked above");
        let shape = e.value.shape().to_vec();
        let m = e.first_moment.get_or_insert_with(|| Tensor::zeros(&shape));
        for (mv, &gv) in m.data_mut().iter_mut().zip(g.data()) {
            *mv = b1 * *mv + (T::one() - b1) * gv;
        }
        let v = e.second_moment.get_or_insert_with(|| Tensor::zeros(&shape));
        for (vv, &gv) in v.data_mut().iter_mut().zip(g.data()) {
            *vv = b2 * *vv + (T::one() - b2) * gv * gv;
        }
        let m = e.first_moment.as_ref().expect("set above");
        let v = e.second_moment.as_ref().expect("set above");
        for ((w, &mv), &vv) in e.value.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let m_hat = mv / bc1;
            let v_hat = vv / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam with an internal step counter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) -> Result<(), NumericsError> {
        adam_step(store, &self.config, self.steps + 1)?;
        self.steps += 1;
        Ok(())
    }
}
