//! Gaussian families. The fixed-variance location family has closed-form
//! information matrices, making it the analytic oracle for the estimation
//! and bias-correction tests; the Gaussian-noise AR family backs the
//! conditional-criterion examples and the AIC/BIC baselines.

use super::{ar_mean, check_scale, expect_point1, expect_window};
use crate::constraints::{ConstraintMap, ParamTransform};
use crate::data::Obs;
use crate::error::{Error, Result};
use crate::score::{ObsSpec, ScoreModel, WEvaluation};

/// Scores of a normal density with mean `theta` and known `sigma`.
pub fn gaussian_location_score(x: f64, theta: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    (-(x - theta) / s2, -1.0 / s2)
}

/// Normal location family with known standard deviation; the single
/// parameter is the mean.
#[derive(Clone, Copy, Debug)]
pub struct GaussianLocation {
    sigma: f64,
}

impl GaussianLocation {
    pub fn new(sigma: f64) -> Result<Self> {
        check_scale(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl ScoreModel for GaussianLocation {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Point { dim: 1 }
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let x = expect_point1(obs)?;
        grad[0] = gaussian_location_score(x, params[0], self.sigma).0;
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, _params: &[f64]) -> Result<f64> {
        let _ = expect_point1(obs)?;
        Ok(-1.0 / (self.sigma * self.sigma))
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let x = expect_point1(obs)?;
        let r = x - params[0];
        Ok(-0.5 * r * r / (self.sigma * self.sigma))
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let x = expect_point1(obs)?;
        let (g, lap) = gaussian_location_score(x, params[0], self.sigma);
        Ok(WEvaluation::from_scores(g * g, lap))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let x = expect_point1(obs)?;
        let s2 = self.sigma * self.sigma;
        let r = x - params[0];
        grad[0] = 2.0 * r / (s2 * s2);
        Ok(-r * r / (s2 * s2) + 2.0 / s2)
    }
}

/// AR(p) with Gaussian noise over flat parameters `[a_1..a_p, c, s]`,
/// mean-centered like the Baker AR model.
#[derive(Clone, Copy, Debug)]
pub struct GaussianAr {
    order: usize,
}

impl GaussianAr {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParams(
                "autoregressive order must be at least 1".into(),
            ));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    fn split<'a>(&self, params: &'a [f64]) -> Result<(&'a [f64], f64, f64)> {
        let p = self.order;
        let s = params[p + 1];
        check_scale(s)?;
        Ok((&params[..p], params[p], s))
    }
}

impl ScoreModel for GaussianAr {
    fn param_dim(&self) -> usize {
        self.order + 2
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Window { lags: self.order }
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s) = self.split(params)?;
        grad[0] = -(current - ar_mean(lags, a, c)) / (s * s);
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (_, _, s) = self.split(params)?;
        let _ = expect_window(obs, self.order)?;
        Ok(-1.0 / (s * s))
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s) = self.split(params)?;
        let r = current - ar_mean(lags, a, c);
        Ok(-0.5 * r * r / (s * s) - s.ln())
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s) = self.split(params)?;
        let s2 = s * s;
        let g = -(current - ar_mean(lags, a, c)) / s2;
        Ok(WEvaluation::from_scores(g * g, -1.0 / s2))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s) = self.split(params)?;
        let p = self.order;
        let s2 = s * s;
        let s4 = s2 * s2;
        let r = current - ar_mean(lags, a, c);
        let w = -r * r / s4 + 2.0 / s2;
        let dw_dm = 2.0 * r / s4;
        let mut coeff_sum = 0.0;
        for j in 0..p {
            grad[j] = dw_dm * (lags[p - 1 - j] - c);
            coeff_sum += a[j];
        }
        grad[p] = dw_dm * (1.0 - coeff_sum);
        grad[p + 1] = 4.0 * r * r / (s4 * s) - 4.0 / (s2 * s);
        Ok(w)
    }

    fn constraint_map(&self) -> ConstraintMap {
        let mut t = vec![ParamTransform::Identity; self.order + 1];
        t.push(ParamTransform::LogPositive);
        ConstraintMap::new(t)
    }
}
