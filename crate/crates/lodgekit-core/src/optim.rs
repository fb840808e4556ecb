//! Optimizers and parameter averaging.
//!
//! Adan is the primary optimizer for both diffusion stages; Adam is kept as
//! a fallback. Both reject non-finite gradients with the parameter name in
//! the error so a diverging run fails loudly instead of poisoning weights.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math::F64Ext;
use crate::nn::ParamStore;
use crate::tensor::Tensor;

/// Adan hyperparameters. Betas follow the reference implementation's
/// defaults; only the learning rate is expected to be tuned.
#[derive(Debug, Clone, Copy)]
pub struct AdanParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdanParams {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.02, beta2: 0.08, beta3: 0.01, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Three-moment Adan state.
///
/// Recurrences per step k (elementwise), with `g` the gradient and
/// `dg = g - g_prev` (zero on the first step):
///
/// ```text
/// m <- (1 - b1) m + b1 g
/// v <- (1 - b2) v + b2 dg
/// n <- (1 - b3) n + b3 (g + (1 - b2) dg)^2
/// theta <- (theta - lr (m + (1 - b2) v) / (sqrt(n) + eps)) / (1 + lr wd)
/// ```
#[derive(Debug, Clone)]
pub struct AdanState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    n: Vec<Tensor>,
    prev_grad: Vec<Tensor>,
    step: u64,
}

impl AdanState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros.clone(), n: zeros.clone(), prev_grad: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Serialize moments in a fixed order (m, v, n, prev_grad per param).
    pub fn export(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for i in 0..self.m.len() {
            out.push(self.m[i].clone());
            out.push(self.v[i].clone());
            out.push(self.n[i].clone());
            out.push(self.prev_grad[i].clone());
        }
        out
    }

    pub fn import(params: &ParamStore, step: u64, mut tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != params.len() * 4 {
            return Err(crate::invalid_arg!(
                "optimizer state has {} tensors, expected {}",
                tensors.len(),
                params.len() * 4
            ));
        }
        let mut state = Self::new(params);
        state.step = step;
        for i in (0..params.len()).rev() {
            state.prev_grad[i] = tensors.pop().unwrap();
            state.n[i] = tensors.pop().unwrap();
            state.v[i] = tensors.pop().unwrap();
            state.m[i] = tensors.pop().unwrap();
        }
        Ok(state)
    }
}

/// One Adan step over all parameters.
pub fn adan_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdanState,
    hp: &AdanParams,
) -> Result<()> {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    check_finite(params, grads)?;
    let first = state.step == 0;
    state.step += 1;
    for (i, theta) in params.tensors_mut().enumerate() {
        let g = &grads[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let n = &mut state.n[i];
        let pg = &mut state.prev_grad[i];
        for e in 0..g.len() {
            let gk = g.data()[e];
            let dg = if first { 0.0 } else { gk - pg.data()[e] };
            let mk = (1.0 - hp.beta1) * m.data()[e] + hp.beta1 * gk;
            let vk = (1.0 - hp.beta2) * v.data()[e] + hp.beta2 * dg;
            let gbar = gk + (1.0 - hp.beta2) * dg;
            let nk = (1.0 - hp.beta3) * n.data()[e] + hp.beta3 * gbar * gbar;
            m.data_mut()[e] = mk;
            v.data_mut()[e] = vk;
            n.data_mut()[e] = nk;
            let update = hp.lr * (mk + (1.0 - hp.beta2) * vk) / (nk.sqrt() + hp.eps);
            let next = (theta.data()[e] - update) / (1.0 + hp.lr * hp.weight_decay);
            theta.data_mut()[e] = next;
        }
        pg.data_mut().copy_from_slice(g.data());
    }
    Ok(())
}

/// Adam hyperparameters (fallback optimizer).
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam step.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    check_finite(params, grads)?;
    state.step += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.step as i32);
    for (i, theta) in params.tensors_mut().enumerate() {
        let g = &grads[i];
        for e in 0..g.len() {
            let gk = g.data()[e];
            let mk = hp.beta1 * state.m[i].data()[e] + (1.0 - hp.beta1) * gk;
            let vk = hp.beta2 * state.v[i].data()[e] + (1.0 - hp.beta2) * gk * gk;
            state.m[i].data_mut()[e] = mk;
            state.v[i].data_mut()[e] = vk;
            let update = hp.lr * (mk / bc1) / ((vk / bc2).sqrt() + hp.eps);
            theta.data_mut()[e] -= update;
        }
    }
    Ok(())
}

fn check_finite(params: &ParamStore, grads: &[Tensor]) -> Result<()> {
    for (i, (name, _)) in params.iter().enumerate() {
        if !grads[i].is_finite() {
            return Err(CoreError::NonFiniteGradient { param: name.into() });
        }
    }
    Ok(())
}

/// In-place EMA update: shadow <- decay * shadow + (1 - decay) * params.
pub fn ema_update(shadow: &mut ParamStore, params: &ParamStore, decay: f64) {
    assert_eq!(shadow.len(), params.len(), "EMA store must mirror parameters");
    for (s, p) in shadow.tensors_mut().zip(params.tensors()) {
        assert_eq!(s.shape(), p.shape());
        for (sv, pv) in s.data_mut().iter_mut().zip(p.data()) {
            *sv = decay * *sv + (1.0 - decay) * pv;
        }
    }
}
