use serde::{Deserialize, Serialize};

use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// RMSProp hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        Self {
            lr: 0.005,
            alpha: 0.99,
            eps: 1e-5,
        }
    }
}

/// Running average of squared gradients, one tensor per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub square_avg: ParamSet,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            square_avg: params.zeros_like(),
            steps: 0,
        }
    }
}

impl RmsProp {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "rmsprop requires lr > 0, 0 < alpha < 1, eps > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// `acc ← α·acc + (1-α)·g²`, then `p ← p - lr·g / √(acc + eps)`.
    pub fn step(&self, params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState) -> Result<()> {
        self.validate()?;
        params.same_keys(grads)?;
        params.same_keys(&state.square_avg)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        for ((name, p), (_, acc)) in params.iter_mut().zip(state.square_avg.iter_mut()) {
            let g = grads.get(name)?;
            for ((pv, av), &gv) in p.data_mut().iter_mut().zip(acc.data_mut().iter_mut()).zip(g.data()) {
                *av = self.alpha * *av + (1.0 - self.alpha) * gv * gv;
                *pv -= self.lr * gv / (*av + self.eps).sqrt();
            }
        }
        state.steps += 1;
        Ok(())
    }
}

/// Functional form: returns updated copies instead of mutating.
pub fn rmsprop_step(
    params: &ParamSet,
    grads: &ParamSet,
    state: &OptimizerState,
    lr: f64,
    alpha: f64,
    eps: f64,
) -> Result<(ParamSet, OptimizerState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    RmsProp { lr, alpha, eps }.step(&mut p, grads, &mut s)?;
    Ok((p, s))
}
