//! The W objective and its sample criteria.
//!
//! For a density p known up to a normalizing constant, the per-observation
//! objective is
//!
//! ```text
//! W(x, p) = -||grad_x log p(x)||^2 - 2 * laplacian_x log p(x)
//! ```
//!
//! and its sample average is the gradient-based information criterion (GIC).
//! Both depend on the density only through derivatives of its log, so the
//! normalizing constant never enters. For Markov data, CGIC averages W of the
//! conditional density over a fixed window so that nested candidates of
//! different orders are compared on identical observations.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMap;
use crate::data::{Dataset, DatasetKind, Obs};
use crate::error::{Error, Result};

/// Observation layout a model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObsSpec {
    /// d-dimensional point, differentiated in every coordinate.
    Point { dim: usize },
    /// (predictor, response) pair, differentiated in the response only.
    Pair,
    /// Time-series window with `lags` lags, differentiated in the current
    /// value only.
    Window { lags: usize },
}

impl ObsSpec {
    /// Dimension of the differentiated variable.
    pub fn obs_dim(self) -> usize {
        match self {
            ObsSpec::Point { dim } => dim,
            ObsSpec::Pair | ObsSpec::Window { .. } => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObsSpec::Point { .. } => "point",
            ObsSpec::Pair => "pair",
            ObsSpec::Window { .. } => "window",
        }
    }
}

/// A model exposing derivatives of its log unnormalized density with respect
/// to the differentiated variable(s), at a flat parameter vector.
pub trait ScoreModel {
    fn param_dim(&self) -> usize;

    fn obs_spec(&self) -> ObsSpec;

    /// Gradient of log p at `obs`, written into `grad` (length `obs_dim`).
    fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()>;

    /// Trace of the Hessian of log p at `obs`.
    fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64>;

    /// Log density up to an additive constant. Test oracle only: no
    /// estimation path evaluates it.
    fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64>;

    fn obs_dim(&self) -> usize {
        self.obs_spec().obs_dim()
    }

    /// W and both score pieces in one evaluation. Families override this with
    /// a fused closed form; the default composes the two score calls.
    fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<WEvaluation> {
        let mut grad = vec![0.0; self.obs_dim()];
        self.grad_log(obs, params, &mut grad)?;
        let lap = self.laplacian_log(obs, params)?;
        Ok(WEvaluation::from_scores(
            grad.iter().map(|g| g * g).sum(),
            lap,
        ))
    }

    /// Whether `w_theta_grad` is implemented.
    fn theta_grad_supported(&self) -> bool {
        false
    }

    /// Fast path: returns W at `obs` and writes dW/dtheta into `grad`
    /// (length `param_dim`). Only called when `theta_grad_supported()`.
    fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        let _ = (obs, params, grad);
        Err(Error::Config(
            "model does not provide analytic theta-gradients".into(),
        ))
    }

    /// Transform tags matching the family's parameter invariants.
    fn constraint_map(&self) -> ConstraintMap {
        ConstraintMap::identity(self.param_dim())
    }
}

/// One evaluation of the W objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WEvaluation {
    pub w: f64,
    pub grad_norm_sq: f64,
    pub laplacian: f64,
}

impl WEvaluation {
    /// Builds the record so that `w = -grad_norm_sq - 2*laplacian` holds
    /// bit-for-bit.
    pub fn from_scores(grad_norm_sq: f64, laplacian: f64) -> Self {
        Self {
            w: -grad_norm_sq - 2.0 * laplacian,
            grad_norm_sq,
            laplacian,
        }
    }
}

/// A GIC or CGIC value together with the sample count it averaged over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GicValue {
    pub value: f64,
    /// n for IID/regression data, N - L for a truncated series.
    pub n_effective: usize,
    pub truncation_l: usize,
}

pub(crate) fn check_params<M: ScoreModel + ?Sized>(model: &M, params: &[f64]) -> Result<()> {
    if params.len() == model.param_dim() {
        Ok(())
    } else {
        Err(Error::ParamLength {
            expected: model.param_dim(),
            actual: params.len(),
        })
    }
}

/// Calls `f(index, obs)` for every observation the model can consume. For a
/// series, `index` is the time index of the current value and iteration
/// starts at `truncation_l` (which must be at least the model's lag count).
pub(crate) fn visit_obs<'a, F>(
    data: &'a Dataset,
    spec: ObsSpec,
    truncation_l: usize,
    mut f: F,
) -> Result<()>
where
    F: FnMut(usize, Obs<'a>) -> Result<()>,
{
    match (data, spec) {
        (Dataset::Unconditional { dim, values }, ObsSpec::Point { dim: want })
            if *dim == want =>
        {
            for (i, chunk) in values.chunks_exact(*dim).enumerate() {
                f(i, Obs::Point(chunk))?;
            }
            Ok(())
        }
        (Dataset::Regression { x, y }, ObsSpec::Pair) => {
            for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
                f(i, Obs::Pair { x: xi, y: yi })?;
            }
            Ok(())
        }
        (Dataset::TimeSeries { values }, ObsSpec::Window { lags }) => {
            debug_assert!(truncation_l >= lags);
            for t in truncation_l..values.len() {
                f(
                    t,
                    Obs::Window {
                        current: values[t],
                        lags: &values[t - lags..t],
                    },
                )?;
            }
            Ok(())
        }
        _ => Err(Error::ObsKindMismatch {
            expected: spec.name(),
            actual: data.kind().name(),
        }),
    }
}

/// Evaluates W at a single observation using the model's analytic scores.
pub fn w_objective<M: ScoreModel + ?Sized>(
    obs: Obs<'_>,
    model: &M,
    params: &[f64],
) -> Result<WEvaluation> {
    check_params(model, params)?;
    let eval = model.w_eval(obs, params)?;
    if eval.w.is_finite() {
        Ok(eval)
    } else {
        Err(Error::NonFiniteScore { index: 0 })
    }
}

/// GIC: the sample mean of W over unconditional or regression data.
pub fn gic<M: ScoreModel + ?Sized>(data: &Dataset, model: &M, params: &[f64]) -> Result<GicValue> {
    check_params(model, params)?;
    if data.kind() == DatasetKind::TimeSeries {
        return Err(Error::ObsKindMismatch {
            expected: "unconditional or regression (use cgic for a series)",
            actual: "timeseries",
        });
    }
    let mut sum = 0.0;
    visit_obs(data, model.obs_spec(), 0, |i, obs| {
        let eval = model.w_eval(obs, params)?;
        if !eval.w.is_finite() {
            return Err(Error::NonFiniteScore { index: i });
        }
        sum += eval.w;
        Ok(())
    })?;
    let n = data.n_raw();
    Ok(GicValue {
        value: sum / n as f64,
        n_effective: n,
        truncation_l: 0,
    })
}

/// CGIC: the mean of conditional W over the common window `t = L+1..N`.
/// Every candidate in a scan must be evaluated with the same `truncation_l`
/// so all criteria average over identical observations.
pub fn cgic<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    params: &[f64],
    truncation_l: usize,
) -> Result<GicValue> {
    check_params(model, params)?;
    let lags = match model.obs_spec() {
        ObsSpec::Window { lags } => lags,
        other => {
            return Err(Error::ObsKindMismatch {
                expected: "window",
                actual: other.name(),
            })
        }
    };
    if truncation_l < lags {
        return Err(Error::Config(format!(
            "truncation L={truncation_l} is below the model order {lags}"
        )));
    }
    let n_raw = data.n_raw();
    if truncation_l >= n_raw {
        return Err(Error::InvalidWindow {
            truncation_l,
            n_raw,
        });
    }
    let mut sum = 0.0;
    visit_obs(data, model.obs_spec(), truncation_l, |t, obs| {
        let eval = model.w_eval(obs, params)?;
        if !eval.w.is_finite() {
            return Err(Error::NonFiniteScore { index: t });
        }
        sum += eval.w;
        Ok(())
    })?;
    let n_eff = n_raw - truncation_l;
    Ok(GicValue {
        value: sum / n_eff as f64,
        n_effective: n_eff,
        truncation_l,
    })
}

/// Maximum relative deviations between analytic scores and finite
/// differences of `log_unnorm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub grad_err: f64,
    pub lap_err: f64,
}

/// Owned observation that can be perturbed coordinate-wise.
#[derive(Clone, Debug)]
enum OwnedObs {
    Point(Vec<f64>),
    Pair { x: f64, y: f64 },
    Window { current: f64, lags: Vec<f64> },
}

impl OwnedObs {
    fn from_obs(obs: Obs<'_>) -> Self {
        match obs {
            Obs::Point(v) => OwnedObs::Point(v.to_vec()),
            Obs::Pair { x, y } => OwnedObs::Pair { x, y },
            Obs::Window { current, lags } => OwnedObs::Window {
                current,
                lags: lags.to_vec(),
            },
        }
    }

    fn as_obs(&self) -> Obs<'_> {
        match self {
            OwnedObs::Point(v) => Obs::Point(v),
            OwnedObs::Pair { x, y } => Obs::Pair { x: *x, y: *y },
            OwnedObs::Window { current, lags } => Obs::Window {
                current: *current,
                lags,
            },
        }
    }

    fn coord(&self, i: usize) -> f64 {
        match self {
            OwnedObs::Point(v) => v[i],
            OwnedObs::Pair { y, .. } => *y,
            OwnedObs::Window { current, .. } => *current,
        }
    }

    fn set_coord(&mut self, i: usize, value: f64) {
        match self {
            OwnedObs::Point(v) => v[i] = value,
            OwnedObs::Pair { y, .. } => *y = value,
            OwnedObs::Window { current, .. } => *current = value,
        }
    }
}

/// Checks the analytic gradient and Laplacian against finite differences of
/// `log_unnorm`. The gradient uses the 3-point central difference at step
/// `h_i = step * (1 + |x_i|)` with default `step = cbrt(eps)`. The Laplacian
/// uses a 5-point second difference whose step is floored at `eps^(1/5)`:
/// a 3-point second difference at gradient-sized steps sits on an f64
/// rounding floor of about 1e-5 relative error, above the 1e-6 these checks
/// must certify.
pub fn fd_score_check<M: ScoreModel + ?Sized>(
    model: &M,
    params: &[f64],
    obs: Obs<'_>,
    step: Option<f64>,
) -> Result<FdReport> {
    check_params(model, params)?;
    if let Some(s) = step {
        if !(s > 0.0) {
            return Err(Error::Config(format!("fd step must be positive, got {s}")));
        }
    }
    let grad_step = step.unwrap_or_else(|| f64::EPSILON.cbrt());
    let lap_step = grad_step.max(f64::EPSILON.powf(0.2));

    let dim = model.obs_dim();
    let mut analytic = vec![0.0; dim];
    model.grad_log(obs, params, &mut analytic)?;
    let analytic_lap = model.laplacian_log(obs, params)?;

    let mut work = OwnedObs::from_obs(obs);
    let mut grad_err: f64 = 0.0;
    let mut lap_fd = 0.0;
    for i in 0..dim {
        let x0 = work.coord(i);

        let h = grad_step * (1.0 + x0.abs());
        work.set_coord(i, x0 + h);
        let fp = model.log_unnorm(work.as_obs(), params)?;
        work.set_coord(i, x0 - h);
        let fm = model.log_unnorm(work.as_obs(), params)?;
        let fd = (fp - fm) / (2.0 * h);
        grad_err = grad_err.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));

        let h2 = lap_step * (1.0 + x0.abs());
        let mut at = |v: f64| -> Result<f64> {
            work.set_coord(i, v);
            model.log_unnorm(work.as_obs(), params)
        };
        let f2p = at(x0 + 2.0 * h2)?;
        let f1p = at(x0 + h2)?;
        let f0 = at(x0)?;
        let f1m = at(x0 - h2)?;
        let f2m = at(x0 - 2.0 * h2)?;
        lap_fd += (-f2p + 16.0 * f1p - 30.0 * f0 + 16.0 * f1m - f2m) / (12.0 * h2 * h2);

        work.set_coord(i, x0);
    }
    let lap_err = (lap_fd - analytic_lap).abs() / analytic_lap.abs().max(1.0);
    Ok(FdReport { grad_err, lap_err })
}

/// Monte-Carlo Fisher divergence between two score models on a shared sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherDivergence {
    /// Mean of ||grad log p - grad log q||^2 over the sample.
    pub divergence: f64,
    /// |avg W(.,p) - avg W(.,q) - divergence|. Zero only in expectation:
    /// the equality of the two divergence estimators relies on integration
    /// by parts, so tests hold this to a few Monte-Carlo SEs, not zero.
    pub identity_residual: f64,
    /// Standard error of the per-point residual mean.
    pub residual_se: f64,
}

/// Estimates the Fisher divergence between `p` and `q` from a sample drawn
/// from `p`, along with the residual of the W-difference identity.
pub fn mc_fisher_divergence<P, Q>(
    p_model: &P,
    p_params: &[f64],
    q_model: &Q,
    q_params: &[f64],
    sample: &Dataset,
) -> Result<FisherDivergence>
where
    P: ScoreModel + ?Sized,
    Q: ScoreModel + ?Sized,
{
    check_params(p_model, p_params)?;
    check_params(q_model, q_params)?;
    if p_model.obs_spec() != q_model.obs_spec() {
        return Err(Error::ObsKindMismatch {
            expected: p_model.obs_spec().name(),
            actual: q_model.obs_spec().name(),
        });
    }
    let dim = p_model.obs_dim();
    let l = match p_model.obs_spec() {
        ObsSpec::Window { lags } => lags,
        _ => 0,
    };
    let mut gp = vec![0.0; dim];
    let mut gq = vec![0.0; dim];
    let mut div_sum = 0.0;
    let mut res_sum = 0.0;
    let mut res_sq_sum = 0.0;
    let mut n = 0usize;
    visit_obs(sample, p_model.obs_spec(), l, |i, obs| {
        p_model.grad_log(obs, p_params, &mut gp)?;
        q_model.grad_log(obs, q_params, &mut gq)?;
        let d2: f64 = gp.iter().zip(&gq).map(|(a, b)| (a - b) * (a - b)).sum();
        let wp = p_model.w_eval(obs, p_params)?.w;
        let wq = q_model.w_eval(obs, q_params)?.w;
        if !(d2.is_finite() && wp.is_finite() && wq.is_finite()) {
            return Err(Error::NonFiniteScore { index: i });
        }
        let r = wp - wq - d2;
        div_sum += d2;
        res_sum += r;
        res_sq_sum += r * r;
        n += 1;
        Ok(())
    })?;
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let nf = n as f64;
    let res_mean = res_sum / nf;
    let res_var = if n > 1 {
        (res_sq_sum - nf * res_mean * res_mean).max(0.0) / (nf - 1.0)
    } else {
        0.0
    };
    Ok(FisherDivergence {
        divergence: div_sum / nf,
        identity_residual: res_mean.abs(),
        residual_se: (res_var / nf).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Standard normal score model with a location parameter.
    struct NormalLoc;

    impl ScoreModel for NormalLoc {
        fn param_dim(&self) -> usize {
            1
        }
        fn obs_spec(&self) -> ObsSpec {
            ObsSpec::Point { dim: 1 }
        }
        fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
            let x = point1(obs);
            grad[0] = -(x - params[0]);
            Ok(())
        }
        fn laplacian_log(&self, _obs: Obs<'_>, _params: &[f64]) -> Result<f64> {
            Ok(-1.0)
        }
        fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            let x = point1(obs);
            Ok(-0.5 * (x - params[0]).powi(2))
        }
    }

    fn point1(obs: Obs<'_>) -> f64 {
        match obs {
            Obs::Point(v) => v[0],
            _ => panic!("expected point"),
        }
    }

    #[test]
    fn w_at_the_mode_is_two() {
        let eval = w_objective(Obs::Point(&[0.0]), &NormalLoc, &[0.0]).unwrap();
        assert_eq!(eval.w, 2.0);
        assert_eq!(eval.grad_norm_sq, 0.0);
        assert_eq!(eval.laplacian, -1.0);
    }

    #[test]
    fn w_one_step_from_the_mode() {
        let eval = w_objective(Obs::Point(&[1.0]), &NormalLoc, &[0.0]).unwrap();
        assert_eq!(eval.w, 1.0);
    }

    #[test]
    fn w_identity_holds_bitwise() {
        for gns in [0.0, 0.5, 3.75] {
            for lap in [-2.0, 0.25, 1.5] {
                let eval = WEvaluation::from_scores(gns, lap);
                assert_eq!(eval.w, -eval.grad_norm_sq - 2.0 * eval.laplacian);
            }
        }
    }

    #[test]
    fn gic_averages_w() {
        let data = Dataset::univariate(vec![0.0, 1.0, -1.0]).unwrap();
        let g = gic(&data, &NormalLoc, &[0.0]).unwrap();
        assert_eq!(g.value, 4.0 / 3.0);
        assert_eq!(g.n_effective, 3);
        assert_eq!(g.truncation_l, 0);
    }

    #[test]
    fn gic_rejects_series_data() {
        let data = Dataset::timeseries(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            gic(&data, &NormalLoc, &[0.0]),
            Err(Error::ObsKindMismatch { .. })
        ));
    }

    #[test]
    fn fd_check_on_quadratic_log_density() {
        let report =
            fd_score_check(&NormalLoc, &[0.3], Obs::Point(&[1.7]), Some(1e-5)).unwrap();
        assert!(report.grad_err <= 1e-6, "grad_err {}", report.grad_err);
        assert!(report.lap_err <= 1e-6, "lap_err {}", report.lap_err);
    }

    #[test]
    fn fd_check_rejects_nonpositive_step() {
        assert!(fd_score_check(&NormalLoc, &[0.0], Obs::Point(&[1.0]), Some(0.0)).is_err());
    }

    #[test]
    fn fisher_divergence_of_identical_models_is_zero() {
        let data = Dataset::univariate(vec![0.4, -1.2, 2.5]).unwrap();
        let d = mc_fisher_divergence(&NormalLoc, &[0.0], &NormalLoc, &[0.0], &data).unwrap();
        assert_eq!(d.divergence, 0.0);
        assert_eq!(d.identity_residual, 0.0);
    }

    #[test]
    fn fisher_divergence_of_unit_shift_is_one() {
        // Scores differ by the constant 1, so every point contributes 1
        // (up to the rounding of x - 1).
        let data = Dataset::univariate(vec![0.0, 0.7, -3.1, 10.0]).unwrap();
        let d = mc_fisher_divergence(&NormalLoc, &[0.0], &NormalLoc, &[1.0], &data).unwrap();
        assert!((d.divergence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_length_checked() {
        let data = Dataset::univariate(vec![0.0]).unwrap();
        assert!(matches!(
            gic(&data, &NormalLoc, &[0.0, 1.0]),
            Err(Error::ParamLength { .. })
        ));
    }
}
