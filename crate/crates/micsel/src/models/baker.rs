//! Unconditional Baker density: location-scale family whose standardized
//! log density is `-alpha*e^2/2 - k*ln(1+e^2)` — a normal kernel times a
//! t-power kernel with an intractable normalizing constant.

use serde::{Deserialize, Serialize};

use super::{
    baker_kernel_log_unnorm, baker_kernel_scores, baker_kernel_w_grad, check_positive,
    check_scale, expect_point1,
};
use crate::constraints::{ConstraintMap, ParamTransform};
use crate::data::Obs;
use crate::error::{Error, Result};
use crate::score::{ObsSpec, ScoreModel, WEvaluation};

/// Parameters of the Baker density: location `mu`, scale `s > 0`, normal
/// precision-like weight `alpha > 0`, and t-power `k > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BakerParams {
    pub mu: f64,
    pub s: f64,
    pub alpha: f64,
    pub k: f64,
}

impl BakerParams {
    pub fn new(mu: f64, s: f64, alpha: f64, k: f64) -> Result<Self> {
        check_scale(s)?;
        check_positive("alpha", alpha)?;
        check_positive("k", k)?;
        if !mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be finite, got {mu}")));
        }
        Ok(Self { mu, s, alpha, k })
    }

    /// Flat layout `[mu, s, alpha, k]`.
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.mu, self.s, self.alpha, self.k]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 4 {
            return Err(Error::ParamLength {
                expected: 4,
                actual: v.len(),
            });
        }
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Gradient and Laplacian of the Baker log density at `y`.
pub fn baker_score(y: f64, params: &BakerParams) -> (f64, f64) {
    baker_kernel_scores(y, params.mu, params.s, params.alpha, params.k)
}

/// The Baker density as a score model over flat parameters
/// `[mu, s, alpha, k]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Baker;

impl Baker {
    #[inline]
    fn unpack(params: &[f64]) -> Result<(f64, f64, f64, f64)> {
        check_scale(params[1])?;
        Ok((params[0], params[1], params[2], params[3]))
    }
}

impl ScoreModel for Baker {
    fn param_dim(&self) -> usize {
        4
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Point { dim: 1 }
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let y = expect_point1(obs)?;
        let (mu, s, alpha, k) = Self::unpack(params)?;
        grad[0] = baker_kernel_scores(y, mu, s, alpha, k).0;
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let y = expect_point1(obs)?;
        let (mu, s, alpha, k) = Self::unpack(params)?;
        Ok(baker_kernel_scores(y, mu, s, alpha, k).1)
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let y = expect_point1(obs)?;
        let (mu, s, alpha, k) = Self::unpack(params)?;
        Ok(baker_kernel_log_unnorm(y, mu, s, alpha, k))
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let y = expect_point1(obs)?;
        let (mu, s, alpha, k) = Self::unpack(params)?;
        let (g, lap) = baker_kernel_scores(y, mu, s, alpha, k);
        Ok(WEvaluation::from_scores(g * g, lap))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let y = expect_point1(obs)?;
        let (mu, s, alpha, k) = Self::unpack(params)?;
        let d = baker_kernel_w_grad(y, mu, s, alpha, k);
        // The conditional mean is mu itself.
        grad[0] = d.dw_dm;
        grad[1] = d.dw_ds;
        grad[2] = d.dw_dalpha;
        grad[3] = d.dw_dk;
        Ok(d.w)
    }

    fn constraint_map(&self) -> ConstraintMap {
        ConstraintMap::new(vec![
            ParamTransform::Identity,
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testutil::{assert_theta_grad, TestObs};
    use crate::score::w_objective;

    fn p() -> BakerParams {
        BakerParams::new(0.0, 1.0, 0.5, 1.5).unwrap()
    }

    #[test]
    fn scores_at_the_mode() {
        let (g, l) = baker_score(0.0, &p());
        assert_eq!(g, 0.0);
        assert_eq!(l, -3.5);
    }

    #[test]
    fn scores_one_unit_from_the_mode() {
        // e=1, u=2: grad = -(0.5 + 1.5) = -2, laplacian = -(0.5 + 0) = -0.5.
        let (g, l) = baker_score(1.0, &p());
        assert!((g + 2.0).abs() < 1e-15);
        assert!((l + 0.5).abs() < 1e-15);
        let eval = w_objective(Obs::Point(&[1.0]), &Baker, &p().to_vec()).unwrap();
        assert!((eval.w + 3.0).abs() < 1e-15);
    }

    #[test]
    fn w_at_the_mode_matches_closed_form() {
        // grad vanishes, so W = -2*laplacian = 2*(alpha + 2k)/s^2.
        for (s, alpha, k) in [(1.0, 0.5, 1.5), (2.0, 0.25, 1.0), (0.5, 1.0, 2.0)] {
            let params = BakerParams::new(0.7, s, alpha, k).unwrap();
            let eval = w_objective(Obs::Point(&[0.7]), &Baker, &params.to_vec()).unwrap();
            assert!((eval.w - 2.0 * (alpha + 2.0 * k) / (s * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_enters_through_the_standardized_residual() {
        // Same standardized residual e=1: doubling s scales grad by 1/2.
        let narrow = BakerParams::new(0.0, 1.0, 0.5, 1.5).unwrap();
        let wide = BakerParams::new(0.0, 2.0, 0.5, 1.5).unwrap();
        assert_eq!(baker_score(2.0, &wide).0, baker_score(1.0, &narrow).0 / 2.0);
        assert_eq!(baker_score(2.0, &wide).1, baker_score(1.0, &narrow).1 / 4.0);
    }

    #[test]
    fn scores_are_odd_and_even_about_the_location() {
        let params = BakerParams::new(0.3, 0.8, 0.6, 1.2).unwrap();
        for delta in [0.1, 0.9, 2.5] {
            let (gp, lp) = baker_score(params.mu + delta, &params);
            let (gm, lm) = baker_score(params.mu - delta, &params);
            assert!((gp + gm).abs() < 1e-14);
            assert!((lp - lm).abs() < 1e-14);
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let params = p().to_vec();
        for y in [-2.0, 0.3, 1.7] {
            assert_theta_grad(&Baker, &params, &TestObs::Point(vec![y]), 1e-7);
        }
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(BakerParams::new(0.0, 0.0, 0.5, 1.5).is_err());
        assert!(BakerParams::new(0.0, 1.0, -0.5, 1.5).is_err());
        assert!(BakerParams::new(0.0, 1.0, 0.5, 0.0).is_err());
        assert!(Baker.laplacian_log(Obs::Point(&[1.0]), &[0.0, -1.0, 0.5, 1.5]).is_err());
    }
}
