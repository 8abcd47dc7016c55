//! Scalar minimizers over unconstrained coordinates. The estimation layer
//! hands them the negated criterion, so "minimize" here means "maximize
//! GIC" there.

pub mod adam;
pub mod bfgs;

pub use adam::AdamConfig;
pub use bfgs::BfgsConfig;

use crate::error::Result;

/// A smooth scalar objective. Implementations return `NaN` (not an error)
/// from `value` at points where the objective is undefined; optimizers
/// treat such points as rejected steps. Hard errors (contract violations)
/// abort the run.
pub(crate) trait Objective {
    fn dim(&self) -> usize;

    fn value(&mut self, x: &[f64]) -> Result<f64>;

    /// Value and gradient at `x`, gradient written into `grad`.
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Terminal state of a minimization run.
#[derive(Clone, Debug)]
pub(crate) struct OptimOutcome {
    /// Best point seen (including the initial one).
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}
