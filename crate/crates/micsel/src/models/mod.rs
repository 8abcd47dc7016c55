//! Model families with closed-form scores.
//!
//! All conditional families (AR and polynomial regression) share the Baker
//! noise kernel: a normal kernel times a t-power kernel,
//! `exp(-alpha*e^2/2) / (1+e^2)^k`, evaluated at the standardized residual
//! `e = (y - mean)/s`. The kernel's derivatives live here so every family
//! differentiates the same code.

pub mod ar_baker;
pub mod baker;
pub mod gaussian;
pub mod poly_baker;
pub mod vonmises;

pub use ar_baker::{ar_baker_score, ArBaker, ArBakerParams};
pub use baker::{baker_score, Baker, BakerParams};
pub use gaussian::{gaussian_location_score, GaussianAr, GaussianLocation};
pub use poly_baker::{poly_baker_score, PolyBaker, PolyBakerParams};
pub use vonmises::{vonmises_score, VonMises2, VonMisesParams};

use crate::data::Obs;
use crate::error::{Error, Result};

/// Gradient and Laplacian (in the observed variable) of the Baker log
/// density at `y` with conditional mean `m`, scale `s`, and shape
/// `(alpha, k)`.
///
/// With `e = (y-m)/s` and `u = 1+e^2`:
///
/// ```text
/// grad      = -(1/s)   * [alpha*e + 2k*e/u]
/// laplacian = -(1/s^2) * [alpha + 2k*(1-e^2)/u^2]
/// ```
#[inline]
pub(crate) fn baker_kernel_scores(y: f64, m: f64, s: f64, alpha: f64, k: f64) -> (f64, f64) {
    let e = (y - m) / s;
    let u = 1.0 + e * e;
    let g1 = alpha * e + 2.0 * k * e / u;
    let l1 = alpha + 2.0 * k * (1.0 - e * e) / (u * u);
    (-g1 / s, -l1 / (s * s))
}

/// Baker log density at `y` up to an additive constant, including the
/// `-ln s` scale Jacobian so that fits over `s` see the full objective.
#[inline]
pub(crate) fn baker_kernel_log_unnorm(y: f64, m: f64, s: f64, alpha: f64, k: f64) -> f64 {
    let e = (y - m) / s;
    let u = 1.0 + e * e;
    -0.5 * alpha * e * e - k * u.ln() - s.ln()
}

/// W at `y` together with its derivatives in the kernel parameters.
/// `dw_dm` is the derivative in the conditional mean; families chain it
/// through their own mean parameterizations.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BakerWGrad {
    pub w: f64,
    pub dw_dm: f64,
    pub dw_ds: f64,
    pub dw_dalpha: f64,
    pub dw_dk: f64,
}

/// Evaluates W and its kernel-parameter gradient in one pass.
///
/// Derivation sketch: with `g1(e) = alpha*e + 2k*e/u` and its derivatives
/// `l1 = g1' = alpha + 2k(1-e^2)/u^2`, `l1' = 4k*e*(e^2-3)/u^3`, the scores
/// are `G = -g1/s`, `L = -l1/s^2` and `W = -G^2 - 2L`. Each parameter
/// derivative below is `-2G*dG - 2*dL` for that parameter, using
/// `de/dm = -1/s` and `de/ds = -e/s`.
#[inline]
pub(crate) fn baker_kernel_w_grad(y: f64, m: f64, s: f64, alpha: f64, k: f64) -> BakerWGrad {
    let e = (y - m) / s;
    let e2 = e * e;
    let u = 1.0 + e2;
    let u2 = u * u;
    let s2 = s * s;
    let s3 = s2 * s;

    let g1 = alpha * e + 2.0 * k * e / u;
    let l1 = alpha + 2.0 * k * (1.0 - e2) / u2;
    let l1p = 4.0 * k * e * (e2 - 3.0) / (u2 * u);

    let g = -g1 / s;
    let lap = -l1 / s2;
    let w = -g * g - 2.0 * lap;

    let dw_dm = -2.0 * g * l1 / s2 - 2.0 * l1p / s3;

    let dg_ds = (g1 + e * l1) / s2;
    let dl_ds = (2.0 * l1 + e * l1p) / s3;
    let dw_ds = -2.0 * g * dg_ds - 2.0 * dl_ds;

    let dw_dalpha = 2.0 * g * e / s + 2.0 / s2;
    let dw_dk = 4.0 * g * e / (s * u) + 4.0 * (1.0 - e2) / (s2 * u2);

    BakerWGrad {
        w,
        dw_dm,
        dw_ds,
        dw_dalpha,
        dw_dk,
    }
}

#[inline]
pub(crate) fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "scale must be a positive finite number, got {s}"
        )))
    }
}

#[inline]
pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name} must be a positive finite number, got {v}"
        )))
    }
}

/// Conditional mean of an AR model: `c + sum_j a_j * (x_{t-j} - c)`.
/// `lags` is chronological, so `a[0]` (the lag-1 coefficient) pairs with
/// `lags[p-1]`, the most recent value.
#[inline]
pub(crate) fn ar_mean(lags: &[f64], a: &[f64], c: f64) -> f64 {
    debug_assert_eq!(lags.len(), a.len());
    let p = a.len();
    let mut m = c;
    for (j, &aj) in a.iter().enumerate() {
        m += aj * (lags[p - 1 - j] - c);
    }
    m
}

/// Conditional mean of a polynomial regression:
/// `c + beta_1*x + ... + beta_p*x^p`, evaluated by Horner's rule.
#[inline]
pub(crate) fn poly_mean(x: f64, beta: &[f64], c: f64) -> f64 {
    let mut acc = 0.0;
    for &b in beta.iter().rev() {
        acc = acc * x + b;
    }
    acc * x + c
}

#[inline]
pub(crate) fn expect_point1(obs: Obs<'_>) -> Result<f64> {
    match obs {
        Obs::Point(v) if v.len() == 1 => Ok(v[0]),
        other => Err(Error::ObsKindMismatch {
            expected: "point",
            actual: other.kind_name(),
        }),
    }
}

#[inline]
pub(crate) fn expect_point2(obs: Obs<'_>) -> Result<(f64, f64)> {
    match obs {
        Obs::Point(v) if v.len() == 2 => Ok((v[0], v[1])),
        other => Err(Error::ObsKindMismatch {
            expected: "point",
            actual: other.kind_name(),
        }),
    }
}

#[inline]
pub(crate) fn expect_pair(obs: Obs<'_>) -> Result<(f64, f64)> {
    match obs {
        Obs::Pair { x, y } => Ok((x, y)),
        other => Err(Error::ObsKindMismatch {
            expected: "pair",
            actual: other.kind_name(),
        }),
    }
}

#[inline]
pub(crate) fn expect_window<'a>(obs: Obs<'a>, p: usize) -> Result<(f64, &'a [f64])> {
    match obs {
        Obs::Window { current, lags } => {
            if lags.len() < p {
                return Err(Error::LagCount {
                    expected: p,
                    actual: lags.len(),
                });
            }
            // A window wider than the model order supplies extra history on
            // the old end; the model reads only its last p lags.
            Ok((current, &lags[lags.len() - p..]))
        }
        other => Err(Error::ObsKindMismatch {
            expected: "window",
            actual: other.kind_name(),
        }),
    }
}
