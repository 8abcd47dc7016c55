//! Bivariate von Mises density on the torus:
//! `exp(k1*cos(x1-mu1) + k2*cos(x2-mu2) + lambda*sin(x1-mu1)*sin(x2-mu2))`
//! with an intractable normalizer. The independence variant (m1) fixes
//! `lambda = 0`; the coupled variant (m2) adjusts it, nesting m1 within m2.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::expect_point2;
use crate::constraints::{ConstraintMap, ParamTransform};
use crate::data::Obs;
use crate::error::{Error, Result};
use crate::score::{ObsSpec, ScoreModel, WEvaluation};

/// Parameters of the bivariate von Mises density. `lambda_fixed_zero`
/// selects the independence variant, which does not adjust `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VonMisesParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub lambda_fixed_zero: bool,
}

impl VonMisesParams {
    /// Independence variant m1 (`lambda` fixed at zero, 4 parameters).
    pub fn independent(kappa1: f64, kappa2: f64, mu1: f64, mu2: f64) -> Result<Self> {
        Self::build(kappa1, kappa2, mu1, mu2, 0.0, true)
    }

    /// Coupled variant m2 (free `lambda`, 5 parameters).
    pub fn coupled(kappa1: f64, kappa2: f64, mu1: f64, mu2: f64, lambda: f64) -> Result<Self> {
        Self::build(kappa1, kappa2, mu1, mu2, lambda, false)
    }

    fn build(
        kappa1: f64,
        kappa2: f64,
        mu1: f64,
        mu2: f64,
        lambda: f64,
        lambda_fixed_zero: bool,
    ) -> Result<Self> {
        for (name, v) in [
            ("kappa1", kappa1),
            ("kappa2", kappa2),
            ("mu1", mu1),
            ("mu2", mu2),
            ("lambda", lambda),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        if kappa1 < 0.0 || kappa2 < 0.0 {
            return Err(Error::InvalidParams(format!(
                "concentrations must be nonnegative, got ({kappa1}, {kappa2})"
            )));
        }
        Ok(Self {
            kappa1,
            kappa2,
            mu1: mu1.rem_euclid(TAU),
            mu2: mu2.rem_euclid(TAU),
            lambda,
            lambda_fixed_zero,
        })
    }

    pub fn param_count(&self) -> usize {
        if self.lambda_fixed_zero {
            4
        } else {
            5
        }
    }

    /// Flat layout `[kappa1, kappa2, mu1, mu2]`, plus `lambda` when free.
    pub fn to_vec(self) -> Vec<f64> {
        let mut v = vec![self.kappa1, self.kappa2, self.mu1, self.mu2];
        if !self.lambda_fixed_zero {
            v.push(self.lambda);
        }
        v
    }

    pub fn from_slice(v: &[f64], lambda_fixed_zero: bool) -> Result<Self> {
        let expected = if lambda_fixed_zero { 4 } else { 5 };
        if v.len() != expected {
            return Err(Error::ParamLength {
                expected,
                actual: v.len(),
            });
        }
        let lambda = if lambda_fixed_zero { 0.0 } else { v[4] };
        Self::build(v[0], v[1], v[2], v[3], lambda, lambda_fixed_zero)
    }
}

/// Gradient (2-vector) and summed Laplacian of the log density at angles
/// `(x1, x2)`. Angles need not be wrapped.
pub fn vonmises_score(x1: f64, x2: f64, params: &VonMisesParams) -> ([f64; 2], f64) {
    let lambda = if params.lambda_fixed_zero {
        0.0
    } else {
        params.lambda
    };
    score_parts(
        x1,
        x2,
        params.kappa1,
        params.kappa2,
        params.mu1,
        params.mu2,
        lambda,
    )
}

#[inline]
fn score_parts(
    x1: f64,
    x2: f64,
    kappa1: f64,
    kappa2: f64,
    mu1: f64,
    mu2: f64,
    lambda: f64,
) -> ([f64; 2], f64) {
    let (s1, c1) = (x1 - mu1).sin_cos();
    let (s2, c2) = (x2 - mu2).sin_cos();
    let g1 = -kappa1 * s1 + lambda * c1 * s2;
    let g2 = -kappa2 * s2 + lambda * s1 * c2;
    let lap = -kappa1 * c1 - kappa2 * c2 - 2.0 * lambda * s1 * s2;
    ([g1, g2], lap)
}

/// Bivariate von Mises as a score model over flat parameters
/// `[kappa1, kappa2, mu1, mu2]` (independence) or `[.., lambda]` (coupled).
#[derive(Clone, Copy, Debug)]
pub struct VonMises2 {
    lambda_fixed_zero: bool,
}

impl VonMises2 {
    /// Independence variant m1.
    pub fn independent() -> Self {
        Self {
            lambda_fixed_zero: true,
        }
    }

    /// Coupled variant m2.
    pub fn coupled() -> Self {
        Self {
            lambda_fixed_zero: false,
        }
    }

    pub fn lambda_fixed_zero(&self) -> bool {
        self.lambda_fixed_zero
    }

    #[inline]
    fn unpack(&self, params: &[f64]) -> (f64, f64, f64, f64, f64) {
        let lambda = if self.lambda_fixed_zero {
            0.0
        } else {
            params[4]
        };
        (params[0], params[1], params[2], params[3], lambda)
    }
}

impl ScoreModel for VonMises2 {
    fn param_dim(&self) -> usize {
        if self.lambda_fixed_zero {
            4
        } else {
            5
        }
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Point { dim: 2 }
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let (x1, x2) = expect_point2(obs)?;
        let (k1, k2, m1, m2, lam) = self.unpack(params);
        let (g, _) = score_parts(x1, x2, k1, k2, m1, m2, lam);
        grad[0] = g[0];
        grad[1] = g[1];
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (x1, x2) = expect_point2(obs)?;
        let (k1, k2, m1, m2, lam) = self.unpack(params);
        Ok(score_parts(x1, x2, k1, k2, m1, m2, lam).1)
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (x1, x2) = expect_point2(obs)?;
        let (k1, k2, m1, m2, lam) = self.unpack(params);
        let (s1, c1) = (x1 - m1).sin_cos();
        let (s2, c2) = (x2 - m2).sin_cos();
        Ok(k1 * c1 + k2 * c2 + lam * s1 * s2)
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let (x1, x2) = expect_point2(obs)?;
        let (k1, k2, m1, m2, lam) = self.unpack(params);
        let (g, lap) = score_parts(x1, x2, k1, k2, m1, m2, lam);
        Ok(WEvaluation::from_scores(g[0] * g[0] + g[1] * g[1], lap))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (x1, x2) = expect_point2(obs)?;
        let (k1, k2, m1, m2, lam) = self.unpack(params);
        let (s1, c1) = (x1 - m1).sin_cos();
        let (s2, c2) = (x2 - m2).sin_cos();
        let g1 = -k1 * s1 + lam * c1 * s2;
        let g2 = -k2 * s2 + lam * s1 * c2;
        let lap = -k1 * c1 - k2 * c2 - 2.0 * lam * s1 * s2;
        let w = -(g1 * g1 + g2 * g2) - 2.0 * lap;

        // dW/dtheta = -2*g1*dg1 - 2*g2*dg2 - 2*dlap per parameter.
        let dw = |dg1: f64, dg2: f64, dlap: f64| -2.0 * (g1 * dg1 + g2 * dg2 + dlap);
        grad[0] = dw(-s1, 0.0, -c1);
        grad[1] = dw(0.0, -s2, -c2);
        grad[2] = dw(
            k1 * c1 + lam * s1 * s2,
            -lam * c1 * c2,
            -k1 * s1 + 2.0 * lam * c1 * s2,
        );
        grad[3] = dw(
            -lam * c1 * c2,
            k2 * c2 + lam * s1 * s2,
            -k2 * s2 + 2.0 * lam * s1 * c2,
        );
        if !self.lambda_fixed_zero {
            grad[4] = dw(c1 * s2, s1 * c2, -2.0 * s1 * s2);
        }
        Ok(w)
    }

    fn constraint_map(&self) -> ConstraintMap {
        let mut t = vec![
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
            ParamTransform::Angle,
            ParamTransform::Angle,
        ];
        if !self.lambda_fixed_zero {
            t.push(ParamTransform::Identity);
        }
        ConstraintMap::new(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{assert_theta_grad, TestObs};
    use crate::score::w_objective;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn truth() -> VonMisesParams {
        VonMisesParams::coupled(2.0, 1.0, 1.5, 2.5, 3.0).unwrap()
    }

    #[test]
    fn scores_vanish_at_the_joint_mode() {
        let p = truth();
        let ([g1, g2], lap) = vonmises_score(p.mu1, p.mu2, &p);
        assert_eq!(g1, 0.0);
        assert_eq!(g2, 0.0);
        assert_eq!(lap, -(p.kappa1 + p.kappa2));
        let eval = w_objective(Obs::Point(&[p.mu1, p.mu2]), &VonMises2::coupled(), &p.to_vec())
            .unwrap();
        assert_eq!(eval.w, 2.0 * (p.kappa1 + p.kappa2));
    }

    #[test]
    fn quarter_turn_from_the_mode() {
        // At x = (mu1 + pi/2, mu2): sin terms give grad (-kappa1, lambda).
        let p = truth();
        let ([g1, g2], _) = vonmises_score(p.mu1 + FRAC_PI_2, p.mu2, &p);
        assert!((g1 + 2.0).abs() < 1e-9, "g1 = {g1}");
        assert!((g2 - 3.0).abs() < 1e-9, "g2 = {g2}");
    }

    #[test]
    fn zero_coupling_decouples_the_coordinates() {
        let p = VonMisesParams::coupled(1.3, 0.7, 0.4, 5.0, 0.0).unwrap();
        let ([g1a, _], _) = vonmises_score(1.0, 2.0, &p);
        let ([g1b, _], _) = vonmises_score(1.0, -4.0, &p);
        assert_eq!(g1a, g1b);
    }

    #[test]
    fn independence_variant_matches_coupled_at_zero_lambda() {
        let m1 = VonMises2::independent();
        let m2 = VonMises2::coupled();
        let p4 = [1.5, 0.8, 0.3, 4.4];
        let p5 = [1.5, 0.8, 0.3, 4.4, 0.0];
        for (x1, x2) in [(0.0, 0.0), (1.0, 2.0), (-3.0, 7.0)] {
            let a = m1.w_eval(Obs::Point(&[x1, x2]), &p4).unwrap();
            let b = m2.w_eval(Obs::Point(&[x1, x2]), &p5).unwrap();
            assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn scores_are_periodic() {
        let p = truth();
        for (x1, x2) in [(0.3, 1.2), (4.0, 5.5)] {
            let (ga, la) = vonmises_score(x1, x2, &p);
            let (gb, lb) = vonmises_score(x1 + 2.0 * PI, x2 - 2.0 * PI, &p);
            assert!((ga[0] - gb[0]).abs() < 1e-12);
            assert!((ga[1] - gb[1]).abs() < 1e-12);
            assert!((la - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn locations_are_wrapped_at_construction() {
        let p = VonMisesParams::coupled(1.0, 1.0, -1.0, 7.0, 0.5).unwrap();
        assert!((0.0..TAU).contains(&p.mu1));
        assert!((0.0..TAU).contains(&p.mu2));
        assert!((p.mu1 - (TAU - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let obs = TestObs::Point(vec![1.1, 3.0]);
        assert_theta_grad(&VonMises2::coupled(), &truth().to_vec(), &obs, 1e-7);
        assert_theta_grad(&VonMises2::independent(), &[2.0, 1.0, 1.5, 2.5], &obs, 1e-7);
    }

    #[test]
    fn negative_concentration_rejected() {
        assert!(VonMisesParams::independent(-0.1, 1.0, 0.0, 0.0).is_err());
    }
}
