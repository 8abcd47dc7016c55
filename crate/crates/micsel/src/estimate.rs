//! Maximum-GIC estimation: maximizes the sample criterion over
//! reparameterized coordinates with Adam or BFGS, plus the standard
//! initializations for every shipped family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintMap;
use crate::data::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::optim::adam::minimize_adam;
use crate::optim::bfgs::minimize_bfgs;
use crate::optim::{AdamConfig, BfgsConfig, Objective};
use crate::score::{cgic, gic, visit_obs, GicValue, ObsSpec, ScoreModel};

/// Which backend produced a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerTag {
    Adam,
    Bfgs,
    LeastSquares,
}

/// Outcome of a maximum-GIC fit, reported on the constrained scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub params_hat: Vec<f64>,
    /// Criterion evaluated at `params_hat`.
    pub gic_at_opt: GicValue,
    pub iterations: usize,
    pub converged: bool,
    /// True when a positivity-constrained coordinate ended within a factor
    /// of 1e-8 of zero; such runs are also marked unconverged.
    pub boundary: bool,
    pub optimizer: OptimizerTag,
    pub init_used: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerSettings {
    Adam(AdamConfig),
    Bfgs(BfgsConfig),
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings::Adam(AdamConfig::default())
    }
}

/// Soft lower bound on one (constrained-scale) parameter during
/// optimization: trial points below it are rejected like non-finite ones.
///
/// Location-scale objectives of this kind are unbounded above in finite
/// samples: once the scale drops toward the spacing of the smallest
/// residuals, the few observations within one scale unit of the center
/// dominate the average and the criterion grows without bound as the
/// scale shrinks further. The quantity the experiments report is the
/// interior stationary point, whose scale is comparable to the residual
/// spread. The floor fences the search away from the degenerate zone; a
/// fit that still ends on the fence (see [`ScaleFloor::parked`]) signals
/// a sample whose criterion rises monotonically into that zone, and the
/// drivers retry it from another start or exclude it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFloor {
    pub index: usize,
    pub min: f64,
}

/// Default ratio of the floor to the initial scale estimate. Interior
/// estimates stay within a small factor of the initial residual-spread
/// estimate, while the degenerate zone only outscores them once the scale
/// falls another order of magnitude, so one quarter separates the two
/// regimes at every sample size the experiments use.
pub const SCALE_FLOOR_RATIO: f64 = 0.25;

/// Endpoints within this factor of the floor count as parked on it.
pub const PARK_FACTOR: f64 = 1.3;

/// A fit that stopped without converging with its scale inside this factor
/// of the floor was still descending into the degenerate zone when the
/// line search gave up; its value carries the same upward inflation as a
/// parked one. Interior optima sit well above this band, and the zone has
/// no stationary point a non-converged endpoint could be approximating.
pub const IN_TRANSIT_FACTOR: f64 = 2.0;

/// Criterion magnitudes below this indicate the flat collapse where every
/// shape parameter has run to zero and the objective is identically zero.
/// At any maximum worth reporting the criterion equals a mean squared
/// score, which is strictly positive.
pub const FLAT_COLLAPSE_EPS: f64 = 1e-4;

impl ScaleFloor {
    /// Floor at [`SCALE_FLOOR_RATIO`] times the scale entry of an initial
    /// parameter vector.
    pub fn from_init(init: &[f64], index: usize) -> Self {
        ScaleFloor {
            index,
            min: SCALE_FLOOR_RATIO * init[index],
        }
    }

    /// True when the scale entry sits within [`PARK_FACTOR`] of the floor,
    /// meaning the optimizer was stopped by the fence rather than by a
    /// stationary point.
    pub fn parked(&self, params: &[f64]) -> bool {
        params[self.index] <= PARK_FACTOR * self.min
    }

    /// True for endpoints that are artifacts of the fence or of the flat
    /// collapse rather than interior stationary points: parked on the
    /// floor, stopped mid-descent just above it (see
    /// [`IN_TRANSIT_FACTOR`]), or collapsed to the all-flat zero plateau.
    pub fn degenerate_fit(&self, fit: &FitResult) -> bool {
        self.parked(&fit.params_hat)
            || (!fit.converged && fit.params_hat[self.index] <= IN_TRANSIT_FACTOR * self.min)
            || fit.gic_at_opt.value.abs() <= FLAT_COLLAPSE_EPS
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub optimizer: OptimizerSettings,
    /// Window truncation for series data; defaults to the model's own lag
    /// count. Scans pass the largest candidate order so every candidate
    /// averages over identical observations.
    pub truncation_l: Option<usize>,
    /// Step scale for finite-difference parameter gradients in the
    /// transformed space; defaults to cbrt(machine epsilon). Only used for
    /// models without analytic parameter gradients.
    pub theta_fd_step: Option<f64>,
    /// Degeneracy guard for scale parameters; see [`ScaleFloor`].
    pub scale_floor: Option<ScaleFloor>,
}

/// Evaluates the fit criterion for any data kind: GIC for unconditional
/// and regression data, the truncated conditional criterion for series.
pub fn evaluate_criterion<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    params: &[f64],
    truncation_l: Option<usize>,
) -> Result<GicValue> {
    match data.kind() {
        DatasetKind::TimeSeries => {
            let lags = match model.obs_spec() {
                ObsSpec::Window { lags } => lags,
                other => {
                    return Err(Error::ObsKindMismatch {
                        expected: "window",
                        actual: other.name(),
                    })
                }
            };
            cgic(data, model, params, truncation_l.unwrap_or(lags))
        }
        _ => gic(data, model, params),
    }
}

/// Negated criterion over transformed coordinates, with scratch buffers so
/// iteration allocates nothing.
struct NegGic<'a, M: ScoreModel + ?Sized> {
    data: &'a Dataset,
    model: &'a M,
    cmap: &'a ConstraintMap,
    truncation_l: usize,
    n_eff: f64,
    theta: Vec<f64>,
    wgrad: Vec<f64>,
    acc: Vec<f64>,
    fd_step: f64,
    analytic: bool,
    floor: Option<ScaleFloor>,
}

impl<'a, M: ScoreModel + ?Sized> NegGic<'a, M> {
    fn new(
        data: &'a Dataset,
        model: &'a M,
        cmap: &'a ConstraintMap,
        config: &FitConfig,
    ) -> Result<Self> {
        let dim = model.param_dim();
        let truncation_l = match (data.kind(), model.obs_spec()) {
            (DatasetKind::TimeSeries, ObsSpec::Window { lags }) => {
                let l = config.truncation_l.unwrap_or(lags);
                if l < lags {
                    return Err(Error::Config(format!(
                        "truncation L={l} is below the model order {lags}"
                    )));
                }
                if l >= data.n_raw() {
                    return Err(Error::InvalidWindow {
                        truncation_l: l,
                        n_raw: data.n_raw(),
                    });
                }
                l
            }
            (DatasetKind::Unconditional, ObsSpec::Point { .. })
            | (DatasetKind::Regression, ObsSpec::Pair) => 0,
            (kind, spec) => {
                return Err(Error::ObsKindMismatch {
                    expected: spec.name(),
                    actual: kind.name(),
                })
            }
        };
        if let Some(floor) = &config.scale_floor {
            if floor.index >= dim {
                return Err(Error::Config(format!(
                    "scale floor index {} is out of range for {dim} parameters",
                    floor.index
                )));
            }
            if !(floor.min > 0.0) || !floor.min.is_finite() {
                return Err(Error::Config(format!(
                    "scale floor must be positive and finite, got {}",
                    floor.min
                )));
            }
        }
        Ok(Self {
            data,
            model,
            cmap,
            truncation_l,
            n_eff: (data.n_raw() - truncation_l) as f64,
            theta: vec![0.0; dim],
            wgrad: vec![0.0; dim],
            acc: vec![0.0; dim],
            fd_step: config.theta_fd_step.unwrap_or_else(|| f64::EPSILON.cbrt()),
            analytic: model.theta_grad_supported(),
            floor: config.scale_floor,
        })
    }

    fn below_floor(&self) -> bool {
        self.floor
            .is_some_and(|f| self.theta[f.index] < f.min)
    }

    /// Sum of W at the current transformed point; NaN when any observation
    /// evaluates non-finite.
    fn w_sum(&mut self, z: &[f64]) -> Result<f64> {
        self.cmap.eval_params(z, &mut self.theta);
        if self.below_floor() {
            return Ok(f64::NAN);
        }
        let mut sum = 0.0;
        let r = visit_obs(self.data, self.model.obs_spec(), self.truncation_l, |i, obs| {
            let w = self.model.w_eval(obs, &self.theta)?.w;
            if !w.is_finite() {
                return Err(Error::NonFiniteScore { index: i });
            }
            sum += w;
            Ok(())
        });
        match r {
            Ok(()) => Ok(sum),
            Err(Error::NonFiniteScore { .. }) | Err(Error::InvalidParams(_)) => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    }
}

impl<M: ScoreModel + ?Sized> Objective for NegGic<'_, M> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn value(&mut self, z: &[f64]) -> Result<f64> {
        Ok(-self.w_sum(z)? / self.n_eff)
    }

    fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        if self.analytic {
            self.cmap.eval_params(z, &mut self.theta);
            if self.below_floor() {
                grad.fill(f64::NAN);
                return Ok(f64::NAN);
            }
            self.acc.fill(0.0);
            let mut sum = 0.0;
            let model = self.model;
            let theta = &self.theta;
            let wgrad = &mut self.wgrad;
            let acc = &mut self.acc;
            let r = visit_obs(self.data, model.obs_spec(), self.truncation_l, |i, obs| {
                let w = model.w_theta_grad(obs, theta, wgrad)?;
                if !w.is_finite() {
                    return Err(Error::NonFiniteScore { index: i });
                }
                sum += w;
                for (a, g) in acc.iter_mut().zip(wgrad.iter()) {
                    *a += g;
                }
                Ok(())
            });
            match r {
                Ok(()) => {}
                Err(Error::NonFiniteScore { .. }) | Err(Error::InvalidParams(_)) => {
                    grad.fill(f64::NAN);
                    return Ok(f64::NAN);
                }
                Err(e) => return Err(e),
            }
            for a in self.acc.iter_mut() {
                *a = -*a / self.n_eff;
            }
            self.cmap.chain_into_z(z, &mut self.acc);
            grad.copy_from_slice(&self.acc);
            Ok(-sum / self.n_eff)
        } else {
            // Central differences of the criterion in the transformed space.
            let f = self.value(z)?;
            let mut zp = z.to_vec();
            for j in 0..z.len() {
                let h = self.fd_step * (1.0 + z[j].abs());
                zp[j] = z[j] + h;
                let fp = self.value(&zp)?;
                zp[j] = z[j] - h;
                let fm = self.value(&zp)?;
                zp[j] = z[j];
                grad[j] = (fp - fm) / (2.0 * h);
            }
            Ok(f)
        }
    }
}

/// Maximum-GIC fit with the configured backend. `init` is on the
/// constrained (reported) scale.
pub fn mgice<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    init: &[f64],
    config: &FitConfig,
) -> Result<FitResult> {
    if init.len() != model.param_dim() {
        return Err(Error::ParamLength {
            expected: model.param_dim(),
            actual: init.len(),
        });
    }
    let cmap = model.constraint_map();
    let z0 = cmap.unconstrain(init)?;
    let mut objective = NegGic::new(data, model, &cmap, config)?;
    if let Some(floor) = config.scale_floor {
        if init[floor.index] <= floor.min {
            return Err(Error::Config(format!(
                "initial scale {} is at or below the floor {}",
                init[floor.index], floor.min
            )));
        }
    }
    let truncation_l = objective.truncation_l;
    let (outcome, tag) = match &config.optimizer {
        OptimizerSettings::Adam(cfg) => (minimize_adam(&mut objective, &z0, cfg)?, OptimizerTag::Adam),
        OptimizerSettings::Bfgs(cfg) => (minimize_bfgs(&mut objective, &z0, cfg)?, OptimizerTag::Bfgs),
    };
    let boundary = cmap.boundary_hit(&outcome.x);
    let params_hat = cmap.report_params(&outcome.x);
    let gic_at_opt = evaluate_criterion(data, model, &params_hat, Some(truncation_l))?;
    // The reported criterion must agree with the objective value the
    // optimizer saw at the same point (report_params only clamps exact
    // boundary cases, which are flagged).
    debug_assert!(
        boundary || (gic_at_opt.value + outcome.f).abs() <= 1e-9 * (1.0 + outcome.f.abs()),
        "criterion mismatch: reported {} vs optimizer {}",
        gic_at_opt.value,
        -outcome.f
    );
    Ok(FitResult {
        params_hat,
        gic_at_opt,
        iterations: outcome.iterations,
        converged: outcome.converged && !boundary,
        boundary,
        optimizer: tag,
        init_used: init.to_vec(),
    })
}

/// Maximum-GIC fit with Adam (first-order, the default for Baker-family
/// models).
pub fn mgice_adam<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    init: &[f64],
    config: &AdamConfig,
) -> Result<FitResult> {
    mgice(
        data,
        model,
        init,
        &FitConfig {
            optimizer: OptimizerSettings::Adam(*config),
            ..FitConfig::default()
        },
    )
}

/// Maximum-GIC fit with BFGS (quasi-Newton, the default for the von Mises
/// variants).
pub fn mgice_bfgs<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    init: &[f64],
    config: &BfgsConfig,
) -> Result<FitResult> {
    mgice(
        data,
        model,
        init,
        &FitConfig {
            optimizer: OptimizerSettings::Bfgs(*config),
            ..FitConfig::default()
        },
    )
}

/// Runs [`mgice`] from each start in turn and returns the first endpoint
/// that is not a fence or collapse artifact (see
/// [`ScaleFloor::degenerate_fit`]), with the flag `false`. When every
/// start ends degenerate the first fit is returned with the flag `true`
/// so the caller can mark or exclude it; without a configured floor the
/// first fit wins outright. Starts that error are skipped, and the last
/// error surfaces only if no start produced a fit.
pub fn mgice_retry<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    inits: &[Vec<f64>],
    config: &FitConfig,
) -> Result<(FitResult, bool)> {
    if inits.is_empty() {
        return Err(Error::Config("at least one start is required".into()));
    }
    let mut first: Option<FitResult> = None;
    let mut last_err: Option<Error> = None;
    for init in inits {
        match mgice(data, model, init, config) {
            Ok(fit) => {
                let degenerate = config.scale_floor.is_some_and(|f| f.degenerate_fit(&fit));
                if !degenerate {
                    return Ok((fit, false));
                }
                if first.is_none() {
                    first = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match first {
        Some(fit) => Ok((fit, true)),
        None => Err(last_err.expect("no fits and no errors is impossible")),
    }
}

/// Family selector for `default_init`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Baker,
    ArBaker { order: usize },
    PolyBaker { degree: usize },
    VonMises { lambda_fixed_zero: bool },
}

/// Sample mean and standard deviation (n-1 divisor). Errors when fewer
/// than two values or zero spread.
pub(crate) fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    if sd > 0.0 {
        Ok((mean, sd))
    } else {
        Err(Error::ZeroVariance)
    }
}

/// Floor for least-squares residual scales so an exact fit still yields a
/// usable positive starting value.
const MIN_INIT_SCALE: f64 = 1e-8;

/// Standard starting values: moments for the Baker location-scale family,
/// least squares for the conditional families, near-zero concentrations
/// for the von Mises variants.
pub fn default_init(data: &Dataset, family: &FamilyTag) -> Result<Vec<f64>> {
    default_init_with(data, family, 0.25, 1.0)
}

/// `default_init` with explicit starting values for the Baker shape pair
/// (the commonly used alternatives are alpha0 = 1 and k0 = 2).
pub fn default_init_with(
    data: &Dataset,
    family: &FamilyTag,
    alpha0: f64,
    k0: f64,
) -> Result<Vec<f64>> {
    match family {
        FamilyTag::Baker => {
            let values = match data {
                Dataset::Unconditional { dim: 1, values } => values,
                _ => {
                    return Err(Error::ObsKindMismatch {
                        expected: "point",
                        actual: data.kind().name(),
                    })
                }
            };
            let (mean, sd) = mean_sd(values)?;
            Ok(vec![mean, sd, alpha0, k0])
        }
        FamilyTag::ArBaker { order } => {
            let p = *order;
            let values = data.series().ok_or(Error::ObsKindMismatch {
                expected: "window",
                actual: data.kind().name(),
            })?;
            let n = values.len();
            if n < p + 2 {
                return Err(Error::InvalidWindow {
                    truncation_l: p,
                    n_raw: n,
                });
            }
            let (c, _) = mean_sd(values)?;
            let rows = n - p;
            let design = DMatrix::from_fn(rows, p + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    values[p + i - j]
                }
            });
            let y = DVector::from_fn(rows, |i, _| values[p + i]);
            let ls = least_squares(&design, &y)?;
            let mut init = ls.coeffs[1..].to_vec();
            init.push(c);
            init.push(ls.residual_sd().max(MIN_INIT_SCALE));
            init.push(alpha0);
            init.push(k0);
            Ok(init)
        }
        FamilyTag::PolyBaker { degree } => {
            let p = *degree;
            let (x, y) = match data {
                Dataset::Regression { x, y } => (x, y),
                _ => {
                    return Err(Error::ObsKindMismatch {
                        expected: "pair",
                        actual: data.kind().name(),
                    })
                }
            };
            mean_sd(y)?;
            let design = DMatrix::from_fn(x.len(), p + 1, |i, j| x[i].powi(j as i32));
            let yv = DVector::from_column_slice(y);
            let ls = least_squares(&design, &yv)?;
            let mut init = ls.coeffs[1..].to_vec();
            init.push(ls.coeffs[0]);
            init.push(ls.residual_sd().max(MIN_INIT_SCALE));
            init.push(alpha0);
            init.push(k0);
            Ok(init)
        }
        FamilyTag::VonMises { lambda_fixed_zero } => {
            // Concentrations start just off their positivity boundary
            // (transformed coordinate ln(1e-3)), everything else at zero.
            let mut init = vec![1e-3, 1e-3, 0.0, 0.0];
            if !lambda_fixed_zero {
                init.push(0.0);
            }
            Ok(init)
        }
    }
}

/// A second start for families whose parameter vector ends in the scale
/// and shape triple `[.., s, alpha, k]`: the same location coefficients
/// with one and a half times the scale estimate and moderate shapes.
/// `None` for families without a scale. Used by the drivers when the
/// data-driven start walks into the degenerate zone.
pub fn retry_init(family: &FamilyTag, init: &[f64]) -> Option<Vec<f64>> {
    match family {
        FamilyTag::VonMises { .. } => None,
        FamilyTag::Baker | FamilyTag::ArBaker { .. } | FamilyTag::PolyBaker { .. } => {
            let mut v = init.to_vec();
            let n = v.len();
            v[n - 3] *= 1.5;
            v[n - 2] = 0.75;
            v[n - 1] = 1.0;
            Some(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ParamTransform;
    use crate::data::Obs;
    use crate::models::{Baker, GaussianLocation};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn adam_recovers_the_sample_mean() {
        let data = Dataset::univariate(vec![1.0, 2.0, 3.0]).unwrap();
        let model = GaussianLocation::new(1.0).unwrap();
        let fit = mgice_adam(&data, &model, &[0.0], &AdamConfig::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params_hat[0] - 2.0).abs() < 1e-4, "{}", fit.params_hat[0]);
        assert_eq!(fit.optimizer, OptimizerTag::Adam);
    }

    #[test]
    fn bfgs_recovers_the_sample_mean_tightly() {
        let data = Dataset::univariate(vec![1.0, 2.0, 3.0]).unwrap();
        let model = GaussianLocation::new(1.0).unwrap();
        let fit = mgice_bfgs(&data, &model, &[0.0], &BfgsConfig::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params_hat[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_budget_returns_the_init() {
        let data = Dataset::univariate(vec![1.0, 2.0, 3.0]).unwrap();
        let model = GaussianLocation::new(1.0).unwrap();
        let cfg = AdamConfig {
            max_iter: 0,
            ..AdamConfig::default()
        };
        let fit = mgice_adam(&data, &model, &[0.5], &cfg).unwrap();
        assert_eq!(fit.params_hat, vec![0.5]);
        assert_eq!(fit.init_used, vec![0.5]);
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 0);
    }

    /// Gaussian location with the mean constrained positive via the log
    /// transform, for the reparameterization-neutrality check.
    struct LogSpaceLocation(GaussianLocation);

    impl ScoreModel for LogSpaceLocation {
        fn param_dim(&self) -> usize {
            1
        }
        fn obs_spec(&self) -> ObsSpec {
            self.0.obs_spec()
        }
        fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
            self.0.grad_log(obs, params, grad)
        }
        fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            self.0.laplacian_log(obs, params)
        }
        fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            self.0.log_unnorm(obs, params)
        }
        fn w_eval(&self, obs: Obs<'_>, params: &[f64]) -> Result<crate::score::WEvaluation> {
            self.0.w_eval(obs, params)
        }
        fn theta_grad_supported(&self) -> bool {
            true
        }
        fn w_theta_grad(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<f64> {
            self.0.w_theta_grad(obs, params, grad)
        }
        fn constraint_map(&self) -> ConstraintMap {
            ConstraintMap::new(vec![ParamTransform::LogPositive])
        }
    }

    #[test]
    fn reparameterization_does_not_move_the_optimum() {
        let data = Dataset::univariate(vec![1.0, 2.0, 3.0]).unwrap();
        let plain = GaussianLocation::new(1.0).unwrap();
        let logged = LogSpaceLocation(GaussianLocation::new(1.0).unwrap());
        let cfg = BfgsConfig::default();
        let a = mgice_bfgs(&data, &plain, &[1.0], &cfg).unwrap();
        let b = mgice_bfgs(&data, &logged, &[1.0], &cfg).unwrap();
        assert!((a.params_hat[0] - b.params_hat[0]).abs() < 1e-6);
    }

    #[test]
    fn fits_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..200)
            .map(|_| 0.3 + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data = Dataset::univariate(values).unwrap();
        let init = default_init(&data, &FamilyTag::Baker).unwrap();
        let cfg = AdamConfig {
            max_iter: 300,
            ..AdamConfig::default()
        };
        let a = mgice_adam(&data, &Baker, &init, &cfg).unwrap();
        let b = mgice_adam(&data, &Baker, &init, &cfg).unwrap();
        assert_eq!(a.params_hat, b.params_hat);
        assert_eq!(a.gic_at_opt.value, b.gic_at_opt.value);
    }

    #[test]
    fn baker_init_uses_moments() {
        let data = Dataset::univariate(vec![-0.2, 0.3, 0.8]).unwrap();
        let init = default_init(&data, &FamilyTag::Baker).unwrap();
        assert!((init[0] - 0.3).abs() < 1e-12);
        assert!((init[1] - 0.5).abs() < 1e-12);
        assert_eq!(&init[2..], &[0.25, 1.0]);
    }

    #[test]
    fn vonmises_init_sits_just_off_the_boundary() {
        let data = Dataset::unconditional(2, vec![0.0, 0.0]).unwrap();
        let m1 = default_init(&data, &FamilyTag::VonMises { lambda_fixed_zero: true }).unwrap();
        assert_eq!(m1, vec![1e-3, 1e-3, 0.0, 0.0]);
        let m2 = default_init(&data, &FamilyTag::VonMises { lambda_fixed_zero: false }).unwrap();
        assert_eq!(m2, vec![1e-3, 1e-3, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn white_noise_gives_near_zero_ar_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::timeseries(values).unwrap();
        let init = default_init(&data, &FamilyTag::ArBaker { order: 1 }).unwrap();
        assert!(init[0].abs() < 0.2, "a1 init = {}", init[0]);
        assert_eq!(init.len(), 5);
        assert!((init[2] - 1.0).abs() < 0.15, "s init = {}", init[2]);
    }

    #[test]
    fn zero_variance_data_cannot_initialize() {
        let data = Dataset::univariate(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            default_init(&data, &FamilyTag::Baker),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn boundary_finish_clears_the_converged_flag() {
        let data = Dataset::univariate(vec![-0.2, 0.3, 0.8]).unwrap();
        let cfg = AdamConfig {
            max_iter: 0,
            ..AdamConfig::default()
        };
        let fit = mgice_adam(&data, &Baker, &[0.3, 0.5, 0.25, 1e-9], &cfg).unwrap();
        assert!(fit.boundary);
        assert!(!fit.converged);
    }

    /// Model without analytic parameter gradients, exercising the
    /// finite-difference fallback.
    struct FdOnlyLocation(GaussianLocation);

    impl ScoreModel for FdOnlyLocation {
        fn param_dim(&self) -> usize {
            1
        }
        fn obs_spec(&self) -> ObsSpec {
            self.0.obs_spec()
        }
        fn grad_log(&self, obs: Obs<'_>, params: &[f64], grad: &mut [f64]) -> Result<()> {
            self.0.grad_log(obs, params, grad)
        }
        fn laplacian_log(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            self.0.laplacian_log(obs, params)
        }
        fn log_unnorm(&self, obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            self.0.log_unnorm(obs, params)
        }
    }

    #[test]
    fn finite_difference_gradients_also_reach_the_mean() {
        let data = Dataset::univariate(vec![1.0, 2.0, 3.0]).unwrap();
        let model = FdOnlyLocation(GaussianLocation::new(1.0).unwrap());
        let fit = mgice_bfgs(&data, &model, &[0.0], &BfgsConfig::default()).unwrap();
        assert!((fit.params_hat[0] - 2.0).abs() < 1e-6);
    }

    fn heavy_tail_sample(stream_id: u64, n: usize) -> (Dataset, Vec<f64>, ScaleFloor) {
        let truth = crate::models::BakerParams::new(0.3, 0.53, 0.48, 1.7).unwrap();
        let mut rng = crate::simulate::RngStream::new(7, stream_id).rng();
        let (draws, _) = crate::simulate::sample_baker(n, &truth, &mut rng).unwrap();
        let data = Dataset::univariate(draws).unwrap();
        let init = default_init(&data, &FamilyTag::Baker).unwrap();
        let floor = ScaleFloor::from_init(&init, 1);
        (data, init, floor)
    }

    fn floored_bfgs(floor: ScaleFloor) -> FitConfig {
        FitConfig {
            optimizer: OptimizerSettings::Bfgs(BfgsConfig::default()),
            scale_floor: Some(floor),
            ..FitConfig::default()
        }
    }

    #[test]
    fn floor_fences_a_sample_whose_criterion_climbs_at_small_scale() {
        // This draw's criterion rises all the way into the degenerate zone;
        // without the floor the scale runs off toward zero.
        let (data, init, floor) = heavy_tail_sample(1, 200);
        let unfenced = FitConfig {
            optimizer: OptimizerSettings::Bfgs(BfgsConfig::default()),
            ..FitConfig::default()
        };
        let wild = mgice(&data, &Baker, &init, &unfenced).unwrap();
        assert!(
            wild.params_hat[1] < 0.25 * floor.min,
            "expected a runaway scale, got {}",
            wild.params_hat[1]
        );
        let fenced = mgice(&data, &Baker, &init, &floored_bfgs(floor)).unwrap();
        assert!(fenced.params_hat[1] >= floor.min);
        assert!(floor.parked(&fenced.params_hat));
        assert!(floor.degenerate_fit(&fenced));
    }

    /// Landscape with a watershed along the scale coordinate `params[1]`:
    /// the criterion rises without bound as the scale falls below ~0.186
    /// and has an interior maximum near 2.99. The observation plays no
    /// role, so the geometry is exact and start-dependent by construction.
    struct WatershedScale;

    impl ScoreModel for WatershedScale {
        fn param_dim(&self) -> usize {
            2
        }
        fn obs_spec(&self) -> ObsSpec {
            ObsSpec::Point { dim: 1 }
        }
        fn grad_log(&self, _obs: Obs<'_>, _params: &[f64], grad: &mut [f64]) -> Result<()> {
            grad[0] = 0.0;
            Ok(())
        }
        fn laplacian_log(&self, _obs: Obs<'_>, params: &[f64]) -> Result<f64> {
            let (m, s) = (params[0], params[1]);
            let phi = 0.1 / s - 0.5 * (s - 3.0) * (s - 3.0) - m * m;
            Ok(-0.5 * phi)
        }
        fn log_unnorm(&self, _obs: Obs<'_>, _params: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn retry_keeps_the_first_interior_endpoint() {
        // A start below the watershed rides the unbounded branch into the
        // fence; a start above it converges to the interior maximum. The
        // retry must fall through to the first start that ends interior.
        let data = Dataset::univariate(vec![0.0, 1.0]).unwrap();
        let floor = ScaleFloor { index: 1, min: 0.08 };
        let config = floored_bfgs(floor);
        let funnel = vec![0.2, 0.1];
        let interior = vec![0.2, 1.0];

        let (fit, degenerate) =
            mgice_retry(&data, &WatershedScale, &[funnel.clone()], &config).unwrap();
        assert!(degenerate);
        assert!(floor.parked(&fit.params_hat));

        let (fit, degenerate) =
            mgice_retry(&data, &WatershedScale, &[funnel, interior], &config).unwrap();
        assert!(!degenerate);
        assert!(fit.converged);
        assert!((fit.params_hat[1] - 2.9887).abs() < 1e-2);
        assert!(fit.params_hat[0].abs() < 1e-4);
    }

    #[test]
    fn retry_flags_samples_where_every_start_parks() {
        let (data, init, floor) = heavy_tail_sample(1, 200);
        let variant = retry_init(&FamilyTag::Baker, &init).unwrap();
        let inits = vec![init, variant];
        let (fit, degenerate) =
            mgice_retry(&data, &Baker, &inits, &floored_bfgs(floor)).unwrap();
        assert!(degenerate);
        assert!(fit.params_hat[1] >= floor.min);
    }

    #[test]
    fn retry_requires_a_start_and_vonmises_has_no_variant() {
        let (data, _, floor) = heavy_tail_sample(1, 200);
        assert!(matches!(
            mgice_retry(&data, &Baker, &[], &floored_bfgs(floor)),
            Err(Error::Config(_))
        ));
        assert!(retry_init(&FamilyTag::VonMises { lambda_fixed_zero: true }, &[0.0; 4]).is_none());
        let base = [1.0, 2.0, 0.4, 0.25, 1.0];
        let variant = retry_init(&FamilyTag::ArBaker { order: 1 }, &base).unwrap();
        assert_eq!(variant[..2], base[..2]);
        assert!((variant[2] - 0.6).abs() < 1e-12);
        assert_eq!(&variant[3..], &[0.75, 1.0]);
    }

    #[test]
    fn floor_configuration_is_validated() {
        let (data, init, _) = heavy_tail_sample(1, 200);
        let bad_index = floored_bfgs(ScaleFloor { index: 9, min: 0.1 });
        assert!(matches!(
            mgice(&data, &Baker, &init, &bad_index),
            Err(Error::Config(_))
        ));
        let bad_min = floored_bfgs(ScaleFloor { index: 1, min: 0.0 });
        assert!(matches!(
            mgice(&data, &Baker, &init, &bad_min),
            Err(Error::Config(_))
        ));
        let above_init = floored_bfgs(ScaleFloor {
            index: 1,
            min: 2.0 * init[1],
        });
        assert!(matches!(
            mgice(&data, &Baker, &init, &above_init),
            Err(Error::Config(_))
        ));
    }
}
