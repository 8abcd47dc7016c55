//! Per-coordinate reparameterizations between the reported parameter scale and
//! the unconstrained scale the optimizers work in.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A transformed (log-positive) coordinate below this value marks a boundary
/// collapse: the fit is flagged and reported as not converged.
pub const BOUNDARY_LOG: f64 = -18.420680743952367; // ln(1e-8)

/// How one parameter coordinate maps between reported and unconstrained scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamTransform {
    /// Reported value is the unconstrained value.
    Identity,
    /// Strictly positive parameter: optimize `z = ln u`, report `exp(z)`.
    LogPositive,
    /// Angle: optimize unconstrained, report wrapped into `[0, 2pi)`.
    Angle,
}

impl ParamTransform {
    /// Unconstrained coordinate for a reported value.
    pub fn unconstrain(self, reported: f64) -> Result<f64> {
        match self {
            ParamTransform::Identity | ParamTransform::Angle => Ok(reported),
            ParamTransform::LogPositive => {
                if reported > 0.0 {
                    Ok(reported.ln())
                } else {
                    Err(Error::InvalidParams(format!(
                        "positive parameter initialized at {reported}"
                    )))
                }
            }
        }
    }

    /// Value handed to score evaluations. Angles stay unwrapped: the score
    /// functions are periodic, and wrapping mid-optimization is pointless.
    pub fn eval_value(self, z: f64) -> f64 {
        match self {
            ParamTransform::Identity | ParamTransform::Angle => z,
            ParamTransform::LogPositive => z.exp(),
        }
    }

    /// Value shown to the user; additionally wraps angles into `[0, 2pi)`.
    pub fn report_value(self, z: f64) -> f64 {
        match self {
            ParamTransform::Identity => z,
            ParamTransform::LogPositive => z.exp(),
            ParamTransform::Angle => z.rem_euclid(TAU),
        }
    }

    /// d(eval_value)/dz, for chaining objective gradients into z-space.
    pub fn d_eval_dz(self, z: f64) -> f64 {
        match self {
            ParamTransform::Identity | ParamTransform::Angle => 1.0,
            ParamTransform::LogPositive => z.exp(),
        }
    }
}

/// Transform tags for a whole parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintMap {
    transforms: Vec<ParamTransform>,
}

impl ConstraintMap {
    pub fn new(transforms: Vec<ParamTransform>) -> Self {
        Self { transforms }
    }

    /// All-identity map of the given dimension.
    pub fn identity(dim: usize) -> Self {
        Self {
            transforms: vec![ParamTransform::Identity; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn transforms(&self) -> &[ParamTransform] {
        &self.transforms
    }

    pub fn unconstrain(&self, reported: &[f64]) -> Result<Vec<f64>> {
        self.check_len(reported.len())?;
        reported
            .iter()
            .zip(&self.transforms)
            .map(|(&v, t)| t.unconstrain(v))
            .collect()
    }

    /// Writes score-evaluation parameters for the unconstrained point `z`.
    pub fn eval_params(&self, z: &[f64], out: &mut [f64]) {
        for ((o, &zi), t) in out.iter_mut().zip(z).zip(&self.transforms) {
            *o = t.eval_value(zi);
        }
    }

    pub fn report_params(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.transforms)
            .map(|(&zi, t)| t.report_value(zi))
            .collect()
    }

    /// Converts a gradient with respect to evaluation parameters into a
    /// gradient with respect to z, in place.
    pub fn chain_into_z(&self, z: &[f64], grad: &mut [f64]) {
        for ((g, &zi), t) in grad.iter_mut().zip(z).zip(&self.transforms) {
            *g *= t.d_eval_dz(zi);
        }
    }

    /// True when any log-positive coordinate has collapsed to the boundary.
    pub fn boundary_hit(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(&self.transforms)
            .any(|(&zi, &t)| t == ParamTransform::LogPositive && zi < BOUNDARY_LOG)
    }

    fn check_len(&self, actual: usize) -> Result<()> {
        if actual == self.transforms.len() {
            Ok(())
        } else {
            Err(Error::ParamLength {
                expected: self.transforms.len(),
                actual,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_positive_round_trips() {
        let t = ParamTransform::LogPositive;
        for &v in &[1e-6, 1e-3, 0.25, 1.0, 17.5, 1e6] {
            let z = t.unconstrain(v).unwrap();
            let back = t.report_value(z);
            assert!((back - v).abs() <= 1e-12 * v.max(1.0), "{v} -> {back}");
        }
    }

    #[test]
    fn angle_wraps_to_principal_range() {
        let t = ParamTransform::Angle;
        assert!((t.report_value(7.0) - (7.0 - TAU)).abs() < 1e-12);
        assert!((t.report_value(-1.0) - (TAU - 1.0)).abs() < 1e-12);
        let wrapped = t.report_value(123.456);
        assert!((0.0..TAU).contains(&wrapped));
    }

    #[test]
    fn identity_round_trips_exactly() {
        let t = ParamTransform::Identity;
        for &v in &[-1e6, -0.5, 0.0, 3.25, 1e6] {
            assert_eq!(t.report_value(t.unconstrain(v).unwrap()), v);
        }
    }

    #[test]
    fn nonpositive_value_rejected_for_log_transform() {
        assert!(ParamTransform::LogPositive.unconstrain(0.0).is_err());
        assert!(ParamTransform::LogPositive.unconstrain(-2.0).is_err());
    }

    #[test]
    fn boundary_flag_fires_below_log_1e8() {
        let map = ConstraintMap::new(vec![
            ParamTransform::Identity,
            ParamTransform::LogPositive,
        ]);
        assert!(!map.boundary_hit(&[0.0, -18.0]));
        assert!(map.boundary_hit(&[0.0, -19.0]));
    }

    #[test]
    fn chain_rule_scales_by_exp_z() {
        let map = ConstraintMap::new(vec![
            ParamTransform::Identity,
            ParamTransform::LogPositive,
            ParamTransform::Angle,
        ]);
        let z = [2.0, -1.0, 0.5];
        let mut grad = [3.0, 3.0, 3.0];
        map.chain_into_z(&z, &mut grad);
        assert_eq!(grad[0], 3.0);
        assert!((grad[1] - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(grad[2], 3.0);
    }
}
