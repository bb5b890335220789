//! Bias-corrected Adam updates over [`Param`] buffers.

use std::collections::BTreeMap;

use super::param::{Param, ParamSet};
use crate::scalar::Real;

/// Optimizer state for a single parameter.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub step: u64,
    pub first_moment: Vec<S>,
    pub second_moment: Vec<S>,
    pub step_size: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Real> AdamState<S> {
    pub fn new(numel: usize, step_size: S) -> Self {
        AdamState {
            step: 0,
            first_moment: vec![S::zero(); numel],
            second_moment: vec![S::zero(); numel],
            step_size,
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            epsilon: S::of(1e-8),
        }
    }
}

/// One bias-corrected Adam step on `param` using its accumulated gradient.
pub fn adam_update<S: Real>(param: &Param<S>, state: &mut AdamState<S>) {
    assert_eq!(
        param.numel(),
        state.first_moment.len(),
        "adam state sized for a different parameter"
    );
    state.step += 1;
    let t = state.step as i32;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let corr1 = S::one() - b1.powi(t);
    let corr2 = S::one() - b2.powi(t);
    let lr = state.step_size;
    let eps = state.epsilon;
    let m = &mut state.first_moment;
    let v = &mut state.second_moment;
    param.apply(|i, value, grad| {
        m[i] = b1 * m[i] + (S::one() - b1) * grad;
        v[i] = b2 * v[i] + (S::one() - b2) * grad * grad;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        value - lr * m_hat / (v_hat.sqrt() + eps)
    });
}

/// Adam over a whole [`ParamSet`], one state per named parameter.
pub struct Adam<S: Real> {
    step_size: S,
    states: BTreeMap<String, AdamState<S>>,
}

impl<S: Real> Adam<S> {
    pub fn new(step_size: S) -> Self {
        Adam {
            step_size,
            states: BTreeMap::new(),
        }
    }

    /// Update every parameter from its accumulated gradient, then zero grads.
    pub fn step(&mut self, params: &ParamSet<S>) {
        for (name, param) in params.iter() {
            let state = self
                .states
                .entry(name.clone())
                .or_insert_with(|| AdamState::new(param.numel(), self.step_size));
            adam_update(param, state);
        }
        params.zero_grad();
    }
}
