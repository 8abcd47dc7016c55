//! Mean-centered autoregressive model with Baker noise:
//! `x_t = c + sum_j a_j (x_{t-j} - c) + s*e_t`. The conditional density of
//! `x_t` given its lags is the Baker density centered at the AR mean, so the
//! scores differentiate in `x_t` only.

use serde::{Deserialize, Serialize};

use super::{
    ar_mean, baker_kernel_log_unnorm, baker_kernel_scores, baker_kernel_w_grad, check_positive,
    check_scale, expect_window,
};
use crate::constraints::{ConstraintMap, ParamTransform};
use crate::data::Obs;
use crate::error::{Error, Result};
use crate::score::{ObsSpec, ScoreModel, WEvaluation};

/// Parameters of the AR-Baker model: coefficients `a` (lag 1 first),
/// center `c`, and Baker noise shape `(s, alpha, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArBakerParams {
    pub a: Vec<f64>,
    pub c: f64,
    pub s: f64,
    pub alpha: f64,
    pub k: f64,
}

impl ArBakerParams {
    pub fn new(a: Vec<f64>, c: f64, s: f64, alpha: f64, k: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidParams(
                "autoregressive order must be at least 1".into(),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidParams(
                "coefficients and center must be finite".into(),
            ));
        }
        check_scale(s)?;
        check_positive("alpha", alpha)?;
        check_positive("k", k)?;
        Ok(Self { a, c, s, alpha, k })
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// Flat layout `[a_1..a_p, c, s, alpha, k]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend([self.c, self.s, self.alpha, self.k]);
        v
    }

    pub fn from_slice(order: usize, v: &[f64]) -> Result<Self> {
        if v.len() != order + 4 {
            return Err(Error::ParamLength {
                expected: order + 4,
                actual: v.len(),
            });
        }
        Self::new(
            v[..order].to_vec(),
            v[order],
            v[order + 1],
            v[order + 2],
            v[order + 3],
        )
    }
}

/// Conditional scores of `x_t` given exactly `p` lags (chronological,
/// most recent last).
pub fn ar_baker_score(current: f64, lags: &[f64], params: &ArBakerParams) -> Result<(f64, f64)> {
    if lags.len() != params.order() {
        return Err(Error::LagCount {
            expected: params.order(),
            actual: lags.len(),
        });
    }
    let m = ar_mean(lags, &params.a, params.c);
    Ok(baker_kernel_scores(
        current,
        m,
        params.s,
        params.alpha,
        params.k,
    ))
}

/// AR(p) with Baker noise over flat parameters `[a_1..a_p, c, s, alpha, k]`.
#[derive(Clone, Copy, Debug)]
pub struct ArBaker {
    order: usize,
}

impl ArBaker {
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
    fn split<'a>(&self, params: &'a [f64]) -> Result<(&'a [f64], f64, f64, f64, f64)> {
        let p = self.order;
        let s = params[p + 1];
        check_scale(s)?;
        Ok((&params[..p], params[p], s, params[p + 2], params[p + 3]))
    }
}

impl ScoreModel for ArBaker {
    fn param_dim(&self) -> usize {
        self.order + 4
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Window { lags: self.order }
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s, alpha, k) = self.split(params)?;
        let m = ar_mean(lags, a, c);
        grad[0] = baker_kernel_scores(current, m, s, alpha, k).0;
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s, alpha, k) = self.split(params)?;
        let m = ar_mean(lags, a, c);
        Ok(baker_kernel_scores(current, m, s, alpha, k).1)
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s, alpha, k) = self.split(params)?;
        let m = ar_mean(lags, a, c);
        Ok(baker_kernel_log_unnorm(current, m, s, alpha, k))
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s, alpha, k) = self.split(params)?;
        let m = ar_mean(lags, a, c);
        let (g, lap) = baker_kernel_scores(current, m, s, alpha, k);
        Ok(WEvaluation::from_scores(g * g, lap))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (current, lags) = expect_window(obs, self.order)?;
        let (a, c, s, alpha, k) = self.split(params)?;
        let m = ar_mean(lags, a, c);
        let d = baker_kernel_w_grad(current, m, s, alpha, k);
        let p = self.order;
        // dm/da_j = x_{t-j} - c; dm/dc = 1 - sum a_j.
        let mut coeff_sum = 0.0;
        for j in 0..p {
            grad[j] = d.dw_dm * (lags[p - 1 - j] - c);
            coeff_sum += a[j];
        }
        grad[p] = d.dw_dm * (1.0 - coeff_sum);
        grad[p + 1] = d.dw_ds;
        grad[p + 2] = d.dw_dalpha;
        grad[p + 3] = d.dw_dk;
        Ok(d.w)
    }

    fn constraint_map(&self) -> ConstraintMap {
        let mut t = vec![ParamTransform::Identity; self.order + 1];
        t.extend([
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
        ]);
        ConstraintMap::new(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::baker::{baker_score, BakerParams};
    use crate::models::testutil::{assert_theta_grad, TestObs};

    fn true_params() -> ArBakerParams {
        ArBakerParams::new(vec![0.50, -0.25, 0.10], 3.00, 0.50, 0.50, 1.50).unwrap()
    }

    #[test]
    fn zero_coefficient_reduces_to_unconditional_baker() {
        let ar = ArBakerParams::new(vec![0.0], 0.0, 1.0, 0.5, 1.5).unwrap();
        let base = BakerParams::new(0.0, 1.0, 0.5, 1.5).unwrap();
        for x in [-1.3, 0.0, 0.4, 2.2] {
            let (g, l) = ar_baker_score(x, &[7.0], &ar).unwrap();
            let (g0, l0) = baker_score(x, &base);
            assert_eq!(g, g0);
            assert_eq!(l, l0);
        }
    }

    #[test]
    fn zero_residual_kills_the_gradient() {
        // Lags at the center give AR mean c, so current = c has residual 0.
        let params = true_params();
        let (g, _) = ar_baker_score(3.0, &[3.0, 3.0, 3.0], &params).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn lag_count_is_enforced() {
        let params = true_params();
        assert!(matches!(
            ar_baker_score(0.0, &[1.0, 2.0], &params),
            Err(Error::LagCount {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let model = ArBaker::new(3).unwrap();
        let params = true_params().to_vec();
        let obs = TestObs::Window {
            current: 3.7,
            lags: vec![2.1, 3.4, 2.8],
        };
        assert_theta_grad(&model, &params, &obs, 1e-6);
    }

    #[test]
    fn wide_window_matches_exact_window() {
        // A scan evaluates low orders on the full-width window; the model
        // must read only its own lags.
        let model = ArBaker::new(1).unwrap();
        let params = ArBakerParams::new(vec![0.4], 1.0, 0.8, 0.5, 1.5)
            .unwrap()
            .to_vec();
        let wide = TestObs::Window {
            current: 1.5,
            lags: vec![99.0, -5.0, 2.0],
        };
        let exact = TestObs::Window {
            current: 1.5,
            lags: vec![2.0],
        };
        let a = model.w_eval(wide.as_obs(), &params).unwrap();
        let b = model.w_eval(exact.as_obs(), &params).unwrap();
        assert_eq!(a.w, b.w);
    }
}
