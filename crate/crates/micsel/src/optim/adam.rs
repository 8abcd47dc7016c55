//! Adam: first-order minimizer with coordinate-wise adaptive step sizes.

use serde::{Deserialize, Serialize};

use super::{Objective, OptimOutcome};
use crate::error::{Error, Result};

/// Adam hyperparameters. The defaults converge on every shipped
/// replication scenario within its runtime budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iter: usize,
    /// Stop when every coordinate moved less than this in one step.
    pub tol: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("adam lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name} must lie in [0,1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be positive, got {}", self.eps)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("adam tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Number of learning-rate halvings allowed after rejected (non-finite)
/// steps before the run is abandoned.
const MAX_HALVINGS: u32 = 20;

pub(crate) fn minimize_adam<O: Objective>(
    obj: &mut O,
    init: &[f64],
    config: &AdamConfig,
) -> Result<OptimOutcome> {
    config.validate()?;
    let dim = obj.dim();
    let mut x = init.to_vec();

    let f0 = obj.value(&x)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteAtInit);
    }
    let mut best_f = f0;
    let mut best_x = x.clone();
    if config.max_iter == 0 {
        return Ok(OptimOutcome {
            x: best_x,
            f: best_f,
            iterations: 0,
            converged: false,
        });
    }

    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut m_prev = vec![0.0; dim];
    let mut v_prev = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut lr = config.lr;
    let mut halvings = 0u32;
    let mut t = 0u32; // accepted-step counter for bias correction
    let mut converged = false;
    let mut iterations = 0usize;

    while iterations < config.max_iter {
        iterations += 1;
        obj.value_grad(&x, &mut grad)?;

        m_prev.copy_from_slice(&m);
        v_prev.copy_from_slice(&v);
        t += 1;
        let bc1 = 1.0 - config.beta1.powi(t as i32);
        let bc2 = 1.0 - config.beta2.powi(t as i32);
        let mut max_step = 0.0f64;
        for j in 0..dim {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
            let step = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + config.eps);
            x_new[j] = x[j] - step;
            max_step = max_step.max(step.abs());
        }

        let f_new = obj.value(&x_new)?;
        if !f_new.is_finite() {
            // Rejected step: rewind the moment estimates, shrink the rate.
            m.copy_from_slice(&m_prev);
            v.copy_from_slice(&v_prev);
            t -= 1;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::StepRejectionsExhausted { halvings });
            }
            lr *= 0.5;
            continue;
        }

        x.copy_from_slice(&x_new);
        if f_new < best_f {
            best_f = f_new;
            best_x.copy_from_slice(&x);
        }
        if max_step < config.tol {
            converged = true;
            break;
        }
    }

    Ok(OptimOutcome {
        x: best_x,
        f: best_f,
        iterations,
        converged,
    })
}
