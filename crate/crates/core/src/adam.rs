// Copyright 2026 The Impression Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// Settings used when decoding impressions into pixels.
    fn default() -> Self {
        AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("adam learning rate must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One bias-corrected Adam update of `values` in place. `step` counts from 1.
pub fn adam_step<T: Real>(
    values: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    step: usize,
) -> Result<()> {
    cfg.validate()?;
    if step == 0 {
        return Err(Error::Config("adam step index starts at 1".into()));
    }
    if grad.len() != values.len() || state.m.len() != values.len() || state.v.len() != values.len() {
        return Err(Error::dim(
            "adam_step",
            &[values.len()],
            &[grad.len(), state.m.len(), state.v.len()],
        ));
    }
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((x, &g), m), v) in values.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        let g = g.f64();
        let m1 = cfg.beta1 * m.f64() + (1.0 - cfg.beta1) * g;
        let v1 = cfg.beta2 * v.f64() + (1.0 - cfg.beta2) * g * g;
        *m = T::of(m1);
        *v = T::of(v1);
        let update = cfg.lr * (m1 / c1) / ((v1 / c2).sqrt() + cfg.eps);
        *x = T::of(x.f64() - update);
    }
    Ok(())
}

/// Adam over a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    states: Vec<AdamState<T>>,
    step: usize,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam {
            cfg,
            states: sizes.iter().map(|&n| AdamState::zeros(n)).collect(),
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Applies one update to every `(values, grad)` pair, in order.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (&'a mut [T], &'a [T])>) -> Result<()> {
        self.step += 1;
        for ((values, grad), state) in params.into_iter().zip(&mut self.states) {
            adam_step(values, grad, state, &self.cfg, self.step)?;
        }
        Ok(())
    }
}
