//! Adam optimizer and the halving learning-rate schedule.

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Element;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// `max(lr_floor, lr_init * 0.5^floor(step / lr_half_every))`.
pub fn lr_schedule(step: u64, lr_init: f64, lr_half_every: u64, lr_floor: f64) -> f64 {
    if lr_half_every == 0 {
        return lr_init.max(lr_floor);
    }
    // Halvings beyond a few thousand underflow to zero anyway; capping keeps
    // the exponent inside i32 for any u64 step.
    let halvings = (step / lr_half_every).min(4096) as i32;
    (lr_init * 0.5f64.powi(halvings)).max(lr_floor)
}

/// First/second moment estimates, one pair of buffers per parameter, in
/// `ParamStore` iteration order. Stored at the training precision so a
/// checkpoint round-trip is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<E: Element> {
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    t: u64,
}

impl<E: Element> AdamState<E> {
    /// Zeroed moments mirroring every parameter's shape.
    pub fn new(params: &ParamStore<E>) -> Self {
        let m: Vec<Vec<E>> = params
            .iter()
            .map(|(_, t)| vec![E::zero(); t.numel()])
            .collect();
        AdamState {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// Rebuild from checkpoint buffers; shapes must mirror `params`.
    pub fn from_parts(params: &ParamStore<E>, m: Vec<Vec<E>>, v: Vec<Vec<E>>, t: u64) -> Result<Self> {
        let expected: Vec<usize> = params.iter().map(|(_, t)| t.numel()).collect();
        let ok = m.len() == expected.len()
            && v.len() == expected.len()
            && m.iter().zip(&expected).all(|(b, &n)| b.len() == n)
            && v.iter().zip(&expected).all(|(b, &n)| b.len() == n);
        if !ok {
            return Err(Error::invalid(
                "adam_state",
                "moment buffers do not mirror the parameter store",
            ));
        }
        Ok(AdamState { m, v, t })
    }

    /// Number of optimizer steps taken.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Moment buffers for the `idx`-th parameter in store order.
    pub fn moments(&self, idx: usize) -> (&[E], &[E]) {
        (&self.m[idx], &self.v[idx])
    }
}

/// One bias-corrected Adam update over every parameter, reading gradients
/// left on the parameter tensors by the backward pass. Inner arithmetic runs
/// in f64 and rounds back to the parameter precision, so the stored state is
/// exactly what the next step reads — checkpoints resume bit-exactly.
pub fn adam_step<E: Element>(
    params: &mut ParamStore<E>,
    state: &mut AdamState<E>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::invalid(
            "adam_step",
            "optimizer state does not mirror the parameter store",
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t.min(1 << 30) as i32);
    let bc2 = 1.0 - beta2.powi(state.t.min(1 << 30) as i32);
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for (idx, name) in names.iter().enumerate() {
        let tensor = params.get(name)?.clone();
        let grad = tensor
            .grad()
            .ok_or_else(|| Error::MissingGrad(name.clone()))?;
        let data = tensor.data();
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let mut updated = vec![E::zero(); data.len()];
        for j in 0..data.len() {
            let g = grad[j].as_f64();
            let mj = beta1 * m[j].as_f64() + (1.0 - beta1) * g;
            let vj = beta2 * v[j].as_f64() + (1.0 - beta2) * g * g;
            m[j] = E::from_f64(mj);
            v[j] = E::from_f64(vj);
            let m_hat = mj / bc1;
            let v_hat = vj / bc2;
            updated[j] = E::from_f64(data[j].as_f64() - lr * m_hat / (v_hat.sqrt() + eps));
        }
        params.update(name, updated)?;
    }
    Ok(())
}
