//! Bias-corrected Adam.

use std::collections::BTreeMap;

use super::TrainConfig;
use crate::numerics::{ParamId, ParamStore};

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam update of `params` at 1-based step `t`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut Moments, t: u64, config: &TrainConfig) {
    assert_eq!(params.len(), grads.len(), "adam_step: parameter/gradient length");
    if state.m.len() != params.len() {
        *state = Moments::zeros(params.len());
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
    }
}

/// Adam over a subset of a parameter store.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    step: u64,
    state: BTreeMap<ParamId, Moments>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<ParamId, Vec<f64>>, config: &TrainConfig) {
        self.step += 1;
        for (&id, g) in grads {
            let state = self.state.entry(id).or_insert_with(|| Moments::zeros(g.len()));
            adam_step(store.get_mut(id).data_mut(), g, state, self.step, config);
        }
    }
}
