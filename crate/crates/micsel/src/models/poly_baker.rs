//! Polynomial regression with Baker errors:
//! `y_i = c + beta_1 x_i + ... + beta_p x_i^p + s*e_i`. The conditional
//! density of `y_i` given `x_i` is the Baker density centered at the
//! polynomial mean, differentiated in `y_i` only.

use serde::{Deserialize, Serialize};

use super::{
    baker_kernel_log_unnorm, baker_kernel_scores, baker_kernel_w_grad, check_positive,
    check_scale, expect_pair, poly_mean,
};
use crate::constraints::{ConstraintMap, ParamTransform};
use crate::data::Obs;
use crate::error::{Error, Result};
use crate::score::{ObsSpec, ScoreModel, WEvaluation};

/// Parameters of the polynomial-Baker regression: coefficients `beta`
/// (degree 1 first), intercept `c`, and Baker noise shape `(s, alpha, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyBakerParams {
    pub beta: Vec<f64>,
    pub c: f64,
    pub s: f64,
    pub alpha: f64,
    pub k: f64,
}

impl PolyBakerParams {
    pub fn new(beta: Vec<f64>, c: f64, s: f64, alpha: f64, k: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParams(
                "polynomial degree must be at least 1".into(),
            ));
        }
        if beta.iter().any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidParams(
                "coefficients and intercept must be finite".into(),
            ));
        }
        check_scale(s)?;
        check_positive("alpha", alpha)?;
        check_positive("k", k)?;
        Ok(Self {
            beta,
            c,
            s,
            alpha,
            k,
        })
    }

    pub fn degree(&self) -> usize {
        self.beta.len()
    }

    /// Flat layout `[beta_1..beta_p, c, s, alpha, k]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend([self.c, self.s, self.alpha, self.k]);
        v
    }

    pub fn from_slice(degree: usize, v: &[f64]) -> Result<Self> {
        if v.len() != degree + 4 {
            return Err(Error::ParamLength {
                expected: degree + 4,
                actual: v.len(),
            });
        }
        Self::new(
            v[..degree].to_vec(),
            v[degree],
            v[degree + 1],
            v[degree + 2],
            v[degree + 3],
        )
    }
}

/// Conditional scores of `y` given the predictor `x`.
pub fn poly_baker_score(x: f64, y: f64, params: &PolyBakerParams) -> (f64, f64) {
    let m = poly_mean(x, &params.beta, params.c);
    baker_kernel_scores(y, m, params.s, params.alpha, params.k)
}

/// Degree-p polynomial regression with Baker errors over flat parameters
/// `[beta_1..beta_p, c, s, alpha, k]`.
#[derive(Clone, Copy, Debug)]
pub struct PolyBaker {
    degree: usize,
}

impl PolyBaker {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParams(
                "polynomial degree must be at least 1".into(),
            ));
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    fn split<'a>(&self, params: &'a [f64]) -> Result<(&'a [f64], f64, f64, f64, f64)> {
        let p = self.degree;
        let s = params[p + 1];
        check_scale(s)?;
        Ok((&params[..p], params[p], s, params[p + 2], params[p + 3]))
    }
}

impl ScoreModel for PolyBaker {
    fn param_dim(&self) -> usize {
        self.degree + 4
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec::Pair
    }

    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
        let (x, y) = expect_pair(obs)?;
        let (beta, c, s, alpha, k) = self.split(params)?;
        let m = poly_mean(x, beta, c);
        grad[0] = baker_kernel_scores(y, m, s, alpha, k).0;
        Ok(())
    }

    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (x, y) = expect_pair(obs)?;
        let (beta, c, s, alpha, k) = self.split(params)?;
        let m = poly_mean(x, beta, c);
        Ok(baker_kernel_scores(y, m, s, alpha, k).1)
    }

    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
        let (x, y) = expect_pair(obs)?;
        let (beta, c, s, alpha, k) = self.split(params)?;
        let m = poly_mean(x, beta, c);
        Ok(baker_kernel_log_unnorm(y, m, s, alpha, k))
    }

    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let (x, y) = expect_pair(obs)?;
        let (beta, c, s, alpha, k) = self.split(params)?;
        let m = poly_mean(x, beta, c);
        let (g, lap) = baker_kernel_scores(y, m, s, alpha, k);
        Ok(WEvaluation::from_scores(g * g, lap))
    }

    fn theta_grad_supported(&self) -> bool {
        true
    }

    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (x, y) = expect_pair(obs)?;
        let (beta, c, s, alpha, k) = self.split(params)?;
        let m = poly_mean(x, beta, c);
        let d = baker_kernel_w_grad(y, m, s, alpha, k);
        let p = self.degree;
        // dm/dbeta_j = x^j; dm/dc = 1.
        let mut xj = 1.0;
        for j in 0..p {
            xj *= x;
            grad[j] = d.dw_dm * xj;
        }
        grad[p] = d.dw_dm;
        grad[p + 1] = d.dw_ds;
        grad[p + 2] = d.dw_dalpha;
        grad[p + 3] = d.dw_dk;
        Ok(d.w)
    }

    fn constraint_map(&self) -> ConstraintMap {
        let mut t = vec![ParamTransform::Identity; self.degree + 1];
        t.extend([
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
            ParamTransform::LogPositive,
        ]);
        ConstraintMap::new(t)
    }
}
