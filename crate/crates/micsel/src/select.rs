//! Nested model selection.
//!
//! The MIC criterion multiplies each candidate's GIC by a factor `C(n, k)`
//! that depends only on the sample size and the parameter count, so the
//! penalty costs a fixed handful of arithmetic operations no matter how
//! large the sample is. The bias-corrected criterion and the Gaussian
//! AIC/BIC baselines are provided for comparison, both far more expensive
//! per candidate.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::estimate::{mgice_retry, FitConfig, FitResult, OptimizerSettings, ScaleFloor};
use crate::linalg::least_squares;
use crate::score::{visit_obs, GicValue, ScoreModel};

/// The two closed-form MIC factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicVariant {
    /// `exp(-2 * #(M_k) / n)`; its selection penalty does not grow with n,
    /// so it can fail to separate candidates above the true order.
    Mic1,
    /// `n^(-#(M_k) / n)`; the log-factor gap between nested candidates
    /// grows like log n, giving consistent selection.
    Mic2,
}

/// Evaluates `C(n, k)`: a fixed number of arithmetic operations,
/// independent of both `n` and the data.
pub fn mic_factor(variant: MicVariant, n_effective: usize, param_count: usize) -> f64 {
    let n = n_effective as f64;
    let k = param_count as f64;
    match variant {
        MicVariant::Mic1 => (-2.0 * k / n).exp(),
        MicVariant::Mic2 => (-k * n.ln() / n).exp(),
    }
}

/// `MIC(k) = C(n, k) * GIC(k)`, using the same `n` the GIC averaged over.
pub fn mic(gic_val: &GicValue, param_count: usize, variant: MicVariant) -> f64 {
    mic_factor(variant, gic_val.n_effective, param_count) * gic_val.value
}

/// Selection criteria. The first three pick the maximizing candidate,
/// AIC/BIC the minimizing one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Mic1,
    Mic2,
    Gicc,
    Aic,
    Bic,
}

impl Criterion {
    pub fn maximizes(self) -> bool {
        matches!(self, Criterion::Mic1 | Criterion::Mic2 | Criterion::Gicc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mic1 => "mic1",
            Criterion::Mic2 => "mic2",
            Criterion::Gicc => "gicc",
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mic1" => Ok(Criterion::Mic1),
            "mic2" => Ok(Criterion::Mic2),
            "gicc" => Ok(Criterion::Gicc),
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::Config(format!(
                "unknown criterion '{other}' (expected mic1, mic2, gicc, aic, or bic)"
            ))),
        }
    }
}

/// A strictly nested candidate sequence indexed by order 1..K, where each
/// order's parameter vector extends the previous one.
pub trait NestedFamily {
    type Model: ScoreModel;

    fn model(&self, order: usize) -> Result<Self::Model>;

    /// Number of independently adjusted parameters at this order.
    fn param_count(&self, order: usize) -> usize;

    fn label(&self, order: usize) -> String;

    fn default_init(&self, data: &Dataset, order: usize) -> Result<Vec<f64>>;

    /// Initial point for `order` built from the previous order's estimate,
    /// padding the new coordinate with zero so the warm start reproduces
    /// the smaller model exactly.
    fn warm_start(&self, order: usize, previous: &[f64]) -> Vec<f64>;

    /// Largest admissible order, if the family is finite.
    fn max_order(&self) -> Option<usize> {
        None
    }

    /// Lower bound on the scale coordinate, when the family has one. Fits
    /// whose scale drops below the bound are treated as failed trial points
    /// so the optimizer stays in the interior basin.
    fn scale_floor(&self, _data: &Dataset, _order: usize) -> Result<Option<ScaleFloor>> {
        Ok(None)
    }

    /// A fallback start derived from the data-driven one, tried when a fit
    /// ends on the scale floor.
    fn retry_start(&self, _order: usize, _base_init: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// AR(k) with Baker noise, k = 1..K.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArBakerFamily;

impl NestedFamily for ArBakerFamily {
    type Model = crate::models::ArBaker;

    fn model(&self, order: usize) -> Result<Self::Model> {
        crate::models::ArBaker::new(order)
    }

    fn param_count(&self, order: usize) -> usize {
        order + 4
    }

    fn label(&self, order: usize) -> String {
        format!("ar({order})")
    }

    fn default_init(&self, data: &Dataset, order: usize) -> Result<Vec<f64>> {
        crate::estimate::default_init(data, &crate::estimate::FamilyTag::ArBaker { order })
    }

    fn warm_start(&self, order: usize, previous: &[f64]) -> Vec<f64> {
        let mut init = previous.to_vec();
        init.insert(order - 1, 0.0);
        init
    }

    fn scale_floor(&self, data: &Dataset, order: usize) -> Result<Option<ScaleFloor>> {
        let init = self.default_init(data, order)?;
        Ok(Some(ScaleFloor::from_init(&init, order + 1)))
    }

    fn retry_start(&self, order: usize, base_init: &[f64]) -> Option<Vec<f64>> {
        crate::estimate::retry_init(&crate::estimate::FamilyTag::ArBaker { order }, base_init)
    }
}

/// Polynomial regression of degree k with Baker errors, k = 1..K.
#[derive(Clone, Copy, Debug, Default)]
pub struct PolyBakerFamily;

impl NestedFamily for PolyBakerFamily {
    type Model = crate::models::PolyBaker;

    fn model(&self, order: usize) -> Result<Self::Model> {
        crate::models::PolyBaker::new(order)
    }

    fn param_count(&self, order: usize) -> usize {
        order + 4
    }

    fn label(&self, order: usize) -> String {
        format!("poly({order})")
    }

    fn default_init(&self, data: &Dataset, order: usize) -> Result<Vec<f64>> {
        crate::estimate::default_init(data, &crate::estimate::FamilyTag::PolyBaker { degree: order })
    }

    fn warm_start(&self, order: usize, previous: &[f64]) -> Vec<f64> {
        let mut init = previous.to_vec();
        init.insert(order - 1, 0.0);
        init
    }

    fn scale_floor(&self, data: &Dataset, order: usize) -> Result<Option<ScaleFloor>> {
        let init = self.default_init(data, order)?;
        Ok(Some(ScaleFloor::from_init(&init, order + 1)))
    }

    fn retry_start(&self, order: usize, base_init: &[f64]) -> Option<Vec<f64>> {
        crate::estimate::retry_init(
            &crate::estimate::FamilyTag::PolyBaker { degree: order },
            base_init,
        )
    }
}

/// The von Mises pair: order 1 is the independence variant (4 parameters),
/// order 2 frees the dependence parameter (5).
#[derive(Clone, Copy, Debug, Default)]
pub struct VonMisesFamily;

impl NestedFamily for VonMisesFamily {
    type Model = crate::models::VonMises2;

    fn model(&self, order: usize) -> Result<Self::Model> {
        match order {
            1 => Ok(crate::models::VonMises2::independent()),
            2 => Ok(crate::models::VonMises2::coupled()),
            other => Err(Error::Config(format!(
                "the von Mises family has exactly two candidates, got order {other}"
            ))),
        }
    }

    fn param_count(&self, order: usize) -> usize {
        order + 3
    }

    fn label(&self, order: usize) -> String {
        format!("m{order}")
    }

    fn default_init(&self, data: &Dataset, order: usize) -> Result<Vec<f64>> {
        crate::estimate::default_init(
            data,
            &crate::estimate::FamilyTag::VonMises {
                lambda_fixed_zero: order == 1,
            },
        )
    }

    fn warm_start(&self, _order: usize, previous: &[f64]) -> Vec<f64> {
        let mut init = previous.to_vec();
        init.push(0.0);
        init
    }

    fn max_order(&self) -> Option<usize> {
        Some(2)
    }
}

/// One candidate's record inside a scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub order: usize,
    pub param_count: usize,
    pub estimate: CandidateEstimate,
    pub gic: Option<GicValue>,
    pub criterion_value: Option<f64>,
    pub bias: Option<BiasEstimate>,
    /// True when the fit ended on, or stopped while descending toward, the
    /// scale floor (or in the flat collapse) even after retries. The value
    /// is reported for transparency but the candidate is not eligible for
    /// selection: fence-limited values are inflated artifacts of the
    /// unbounded degenerate zone, not comparable fit quality.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateEstimate {
    Fitted(FitResult),
    LeastSquares {
        params: Vec<f64>,
        log_likelihood: f64,
    },
    Excluded {
        reason: String,
    },
}

/// Result of scanning a nested family under one criterion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionScan {
    pub criterion: Criterion,
    pub candidates: Vec<CandidateSummary>,
    /// Order of the selected candidate among non-degenerate ones (ties go
    /// to the smallest order).
    pub selected_k: usize,
    /// Shared series truncation; zero for non-series data.
    pub truncation_l: usize,
    pub warnings: Vec<String>,
}

/// Criterion-independent fits of every candidate in a scan, reusable
/// across criteria.
#[derive(Clone, Debug)]
pub struct ScanFits {
    pub k_max: usize,
    pub truncation_l: usize,
    /// Optimizer tolerance, used as slack in the nesting-monotonicity check.
    pub eps_opt: f64,
    pub fits: Vec<CandidateFit>,
}

#[derive(Clone, Debug)]
pub struct CandidateFit {
    pub order: usize,
    pub param_count: usize,
    pub label: String,
    pub outcome: std::result::Result<FitResult, String>,
    /// See [`CandidateSummary::degenerate`].
    pub degenerate: bool,
}

/// Fits candidates 1..=k_max by maximum GIC, warm-starting each order from
/// the previous one. Series data share the truncation `L = k_max` so every
/// candidate averages over identical observations.
pub fn fit_candidates<F: NestedFamily>(
    data: &Dataset,
    family: &F,
    k_max: usize,
    fit_config: &FitConfig,
) -> Result<ScanFits> {
    if k_max < 1 {
        return Err(Error::Config("a scan needs at least one candidate".into()));
    }
    if let Some(limit) = family.max_order() {
        if k_max > limit {
            return Err(Error::Config(format!(
                "this family has at most {limit} candidates, got K={k_max}"
            )));
        }
    }
    let truncation_l = if data.kind() == DatasetKind::TimeSeries {
        if k_max >= data.n_raw() {
            return Err(Error::InvalidWindow {
                truncation_l: k_max,
                n_raw: data.n_raw(),
            });
        }
        k_max
    } else {
        0
    };
    let mut config = fit_config.clone();
    if data.kind() == DatasetKind::TimeSeries {
        config.truncation_l = Some(truncation_l);
    }
    let eps_opt = match &config.optimizer {
        OptimizerSettings::Adam(c) => c.tol,
        OptimizerSettings::Bfgs(c) => c.grad_tol,
    };

    let mut fits = Vec::with_capacity(k_max);
    let mut previous: Option<Vec<f64>> = None;
    for order in 1..=k_max {
        let outcome = (|| -> Result<(FitResult, bool)> {
            let model = family.model(order)?;
            let base = family.default_init(data, order)?;
            let mut inits = Vec::new();
            if let Some(prev) = &previous {
                inits.push(family.warm_start(order, prev));
            }
            inits.push(base.clone());
            if let Some(retry) = family.retry_start(order, &base) {
                inits.push(retry);
            }
            config.scale_floor = family.scale_floor(data, order)?;
            mgice_retry(data, &model, &inits, &config)
        })();
        let (outcome, degenerate) = match outcome {
            Ok((fit, degenerate)) => (Ok(fit), degenerate),
            Err(e) => (Err(e.to_string()), false),
        };
        // Continue the warm-start chain only from trustworthy endpoints; a
        // later candidate can still start from scratch.
        previous = match &outcome {
            Ok(fit) if !degenerate && fit.converged => Some(fit.params_hat.clone()),
            _ => None,
        };
        fits.push(CandidateFit {
            order,
            param_count: family.param_count(order),
            label: family.label(order),
            outcome,
            degenerate,
        });
    }
    Ok(ScanFits {
        k_max,
        truncation_l,
        eps_opt,
        fits,
    })
}

/// Index of the best value under the tie-to-smallest rule.
pub(crate) fn argbest(values: &[Option<f64>], maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if maximize {
                        v > b
                    } else {
                        v < b
                    }
                }
            };
            if better {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Applies one criterion to prefitted candidates and selects.
pub fn select_from_fits<F: NestedFamily>(
    data: &Dataset,
    family: &F,
    fits: &ScanFits,
    criterion: Criterion,
    gicc_fd_step: Option<f64>,
) -> Result<SelectionScan> {
    if !criterion.maximizes() {
        return Err(Error::Config(format!(
            "criterion {criterion} is not GIC-based; use the Gaussian AIC/BIC baseline"
        )));
    }
    let mut warnings = Vec::new();
    let mut candidates = Vec::with_capacity(fits.fits.len());
    for cf in &fits.fits {
        if cf.degenerate {
            warnings.push(format!(
                "{}: fit ended on or descending toward the scale floor even after retries; \
                 its value is reported but not eligible for selection",
                cf.label
            ));
        }
        let summary = match &cf.outcome {
            Ok(fit) => {
                let gic = fit.gic_at_opt;
                let (value, bias) = match criterion {
                    Criterion::Mic1 => (Some(mic(&gic, cf.param_count, MicVariant::Mic1)), None),
                    Criterion::Mic2 => (Some(mic(&gic, cf.param_count, MicVariant::Mic2)), None),
                    Criterion::Gicc => {
                        let model = family.model(cf.order)?;
                        match gicc(data, &model, fit, gicc_fd_step) {
                            Ok((value, bias)) => {
                                if bias.condition_flag {
                                    warnings.push(format!(
                                        "{}: bias-correction system is ill-conditioned",
                                        cf.label
                                    ));
                                }
                                (Some(value), Some(bias))
                            }
                            Err(e) => {
                                warnings.push(format!("{}: bias correction failed: {e}", cf.label));
                                (None, None)
                            }
                        }
                    }
                    Criterion::Aic | Criterion::Bic => unreachable!(),
                };
                CandidateSummary {
                    order: cf.order,
                    param_count: cf.param_count,
                    estimate: CandidateEstimate::Fitted(fit.clone()),
                    gic: Some(gic),
                    criterion_value: value,
                    bias,
                    degenerate: cf.degenerate,
                }
            }
            Err(reason) => {
                warnings.push(format!("{} excluded: {reason}", cf.label));
                CandidateSummary {
                    order: cf.order,
                    param_count: cf.param_count,
                    estimate: CandidateEstimate::Excluded {
                        reason: reason.clone(),
                    },
                    gic: None,
                    criterion_value: None,
                    bias: None,
                    degenerate: cf.degenerate,
                }
            }
        };
        candidates.push(summary);
    }

    // A larger candidate can represent any smaller one exactly, so its
    // fitted GIC dropping below the previous order's (beyond optimizer
    // slack) indicates an optimization failure. Degenerate values carry
    // fence artifacts, not fit quality, so they don't enter the check.
    let trusted: Vec<&CandidateSummary> = candidates.iter().filter(|c| !c.degenerate).collect();
    for pair in trusted.windows(2) {
        if let (Some(lo), Some(hi)) = (&pair[0].gic, &pair[1].gic) {
            if hi.value < lo.value - fits.eps_opt {
                warnings.push(format!(
                    "order {} fitted GIC {} fell below order {}'s {}; optimization may have failed",
                    pair[1].order, hi.value, pair[0].order, lo.value
                ));
            }
        }
    }

    let values: Vec<Option<f64>> = candidates
        .iter()
        .map(|c| if c.degenerate { None } else { c.criterion_value })
        .collect();
    let best = argbest(&values, true).ok_or(Error::AllCandidatesFailed)?;
    let selected_k = candidates[best].order;
    if let Some(g) = &candidates[best].gic {
        if g.value <= 0.0 {
            warnings.push(format!(
                "selected candidate's GIC is not positive ({}); the consistency argument for \
                 factor-based selection assumes positive GIC",
                g.value
            ));
        }
    }
    Ok(SelectionScan {
        criterion,
        candidates,
        selected_k,
        truncation_l: fits.truncation_l,
        warnings,
    })
}

/// Fits and selects in one call.
pub fn scan_nested<F: NestedFamily>(
    data: &Dataset,
    family: &F,
    k_max: usize,
    criterion: Criterion,
    fit_config: &FitConfig,
) -> Result<SelectionScan> {
    let fits = fit_candidates(data, family, k_max, fit_config)?;
    select_from_fits(data, family, &fits, criterion, None)
}

/// Sample information matrices behind the bias-corrected criterion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiasEstimate {
    /// `-trace(lambda_hat * d_hat^{-1})`.
    pub b_value: f64,
    /// True when the condition estimate of `d_hat` exceeds 1e10.
    pub condition_flag: bool,
    pub dim: usize,
    /// Sample average of the outer product of the parameter gradient of W
    /// (row-major `dim x dim`).
    #[serde(skip)]
    pub lambda_hat: Vec<f64>,
    /// Sample average of the parameter Hessian of W (row-major).
    #[serde(skip)]
    pub d_hat: Vec<f64>,
}

/// `n * GIC - B`: the bias-corrected criterion value.
pub fn gicc_value(gic_val: &GicValue, b_value: f64) -> f64 {
    gic_val.n_effective as f64 * gic_val.value - b_value
}

/// Bias-corrected criterion at a fitted model. Parameter derivatives of W
/// are taken by central finite differences in the transformed space with
/// per-coordinate step `fd_step * (1 + |z_j|)`, default
/// `fd_step = eps^(1/4)`.
pub fn gicc<M: ScoreModel + ?Sized>(
    data: &Dataset,
    model: &M,
    fit: &FitResult,
    fd_step: Option<f64>,
) -> Result<(f64, BiasEstimate)> {
    let dim = model.param_dim();
    if fit.params_hat.len() != dim {
        return Err(Error::ParamLength {
            expected: dim,
            actual: fit.params_hat.len(),
        });
    }
    let gic_val = fit.gic_at_opt;
    if gic_val.n_effective <= dim {
        return Err(Error::Config(format!(
            "bias correction needs more observations ({}) than parameters ({dim})",
            gic_val.n_effective
        )));
    }
    if let Some(s) = fd_step {
        if !(s > 0.0) {
            return Err(Error::Config(format!("fd step must be positive, got {s}")));
        }
    }
    let step = fd_step.unwrap_or_else(|| f64::EPSILON.powf(0.25));
    let cmap = model.constraint_map();
    let z = cmap.unconstrain(&fit.params_hat)?;
    let h: Vec<f64> = z.iter().map(|&zj| step * (1.0 + zj.abs())).collect();

    let mut theta = vec![0.0; dim];
    let mut zw = z.clone();
    let mut wp = vec![0.0; dim];
    let mut wm = vec![0.0; dim];
    let mut grad = DVector::<f64>::zeros(dim);
    let mut lambda = DMatrix::<f64>::zeros(dim, dim);
    let mut dmat = DMatrix::<f64>::zeros(dim, dim);

    visit_obs(data, model.obs_spec(), gic_val.truncation_l, |i, obs| {
        let mut w_at = |zq: &[f64]| -> Result<f64> {
            cmap.eval_params(zq, &mut theta);
            let w = model.w_eval(obs, &theta)?.w;
            if w.is_finite() {
                Ok(w)
            } else {
                Err(Error::NonFiniteScore { index: i })
            }
        };
        let w0 = w_at(&zw)?;
        for j in 0..dim {
            zw[j] = z[j] + h[j];
            wp[j] = w_at(&zw)?;
            zw[j] = z[j] - h[j];
            wm[j] = w_at(&zw)?;
            zw[j] = z[j];
            grad[j] = (wp[j] - wm[j]) / (2.0 * h[j]);
            dmat[(j, j)] += (wp[j] - 2.0 * w0 + wm[j]) / (h[j] * h[j]);
        }
        for j in 0..dim {
            for l in (j + 1)..dim {
                zw[j] = z[j] + h[j];
                zw[l] = z[l] + h[l];
                let wpp = w_at(&zw)?;
                zw[l] = z[l] - h[l];
                let wpm = w_at(&zw)?;
                zw[j] = z[j] - h[j];
                let wmm = w_at(&zw)?;
                zw[l] = z[l] + h[l];
                let wmp = w_at(&zw)?;
                zw[j] = z[j];
                zw[l] = z[l];
                let cross = (wpp - wpm - wmp + wmm) / (4.0 * h[j] * h[l]);
                dmat[(j, l)] += cross;
                dmat[(l, j)] += cross;
            }
        }
        lambda.syger(1.0, &grad, &grad, 1.0);
        Ok(())
    })?;

    let n = gic_val.n_effective as f64;
    // syger fills only the lower triangle; mirror it.
    for j in 0..dim {
        for l in (j + 1)..dim {
            lambda[(j, l)] = lambda[(l, j)];
        }
    }
    lambda /= n;
    dmat /= n;

    let svd = dmat.clone().svd(false, false);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let s_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(s_min > 0.0) || !s_max.is_finite() {
        return Err(Error::SingularBias);
    }
    let condition_flag = s_max / s_min > 1e10;

    let lu = dmat.clone().lu();
    let solved = lu.solve(&lambda).ok_or(Error::SingularBias)?;
    let b_value = -solved.trace();

    let bias = BiasEstimate {
        b_value,
        condition_flag,
        dim,
        lambda_hat: lambda.transpose().as_slice().to_vec(),
        d_hat: dmat.transpose().as_slice().to_vec(),
    };
    Ok((gicc_value(&gic_val, b_value), bias))
}

/// Gaussian AR (for series) or Gaussian polynomial regression (for pairs)
/// fitted by least squares over orders 1..=k_max, scored by AIC and BIC.
/// All AR candidates share the prediction window `t = k_max..N`.
pub fn aic_bic_gaussian(data: &Dataset, k_max: usize) -> Result<(SelectionScan, SelectionScan)> {
    if k_max < 1 {
        return Err(Error::Config("a scan needs at least one candidate".into()));
    }
    struct Cell {
        order: usize,
        param_count: usize,
        outcome: std::result::Result<(Vec<f64>, f64, usize), String>, // params, logL, n_eff
    }
    let mut cells = Vec::with_capacity(k_max);
    match data {
        Dataset::TimeSeries { values } => {
            let n = values.len();
            if n <= k_max + 2 {
                return Err(Error::InvalidWindow {
                    truncation_l: k_max,
                    n_raw: n,
                });
            }
            let rows = n - k_max;
            for order in 1..=k_max {
                let design = DMatrix::from_fn(rows, order + 1, |i, j| {
                    if j == 0 {
                        1.0
                    } else {
                        values[k_max + i - j]
                    }
                });
                let y = DVector::from_fn(rows, |i, _| values[k_max + i]);
                cells.push(Cell {
                    order,
                    param_count: order + 2,
                    outcome: gaussian_cell(&design, &y),
                });
            }
        }
        Dataset::Regression { x, y } => {
            if x.len() <= k_max + 2 {
                return Err(Error::InvalidWindow {
                    truncation_l: k_max,
                    n_raw: x.len(),
                });
            }
            for order in 1..=k_max {
                let design = DMatrix::from_fn(x.len(), order + 1, |i, j| x[i].powi(j as i32));
                let yv = DVector::from_column_slice(y);
                cells.push(Cell {
                    order,
                    param_count: order + 2,
                    outcome: gaussian_cell(&design, &yv),
                });
            }
        }
        Dataset::Unconditional { .. } => {
            return Err(Error::ObsKindMismatch {
                expected: "window or pair",
                actual: "point",
            })
        }
    }

    let truncation_l = if data.kind() == DatasetKind::TimeSeries {
        k_max
    } else {
        0
    };
    let build = |criterion: Criterion| -> Result<SelectionScan> {
        let mut warnings = Vec::new();
        let mut candidates = Vec::with_capacity(cells.len());
        for cell in &cells {
            let summary = match &cell.outcome {
                Ok((params, log_l, n_eff)) => {
                    let p = cell.param_count as f64;
                    let value = match criterion {
                        Criterion::Aic => 2.0 * p - 2.0 * log_l,
                        Criterion::Bic => p * (*n_eff as f64).ln() - 2.0 * log_l,
                        _ => unreachable!(),
                    };
                    CandidateSummary {
                        order: cell.order,
                        param_count: cell.param_count,
                        estimate: CandidateEstimate::LeastSquares {
                            params: params.clone(),
                            log_likelihood: *log_l,
                        },
                        gic: None,
                        criterion_value: Some(value),
                        bias: None,
                        degenerate: false,
                    }
                }
                Err(reason) => {
                    warnings.push(format!("order {} excluded: {reason}", cell.order));
                    CandidateSummary {
                        order: cell.order,
                        param_count: cell.param_count,
                        estimate: CandidateEstimate::Excluded {
                            reason: reason.clone(),
                        },
                        gic: None,
                        criterion_value: None,
                        bias: None,
                        degenerate: false,
                    }
                }
            };
            candidates.push(summary);
        }
        let values: Vec<Option<f64>> = candidates.iter().map(|c| c.criterion_value).collect();
        let best = argbest(&values, false).ok_or(Error::AllCandidatesFailed)?;
        Ok(SelectionScan {
            criterion,
            selected_k: candidates[best].order,
            candidates,
            truncation_l,
            warnings,
        })
    };
    Ok((build(Criterion::Aic)?, build(Criterion::Bic)?))
}

/// Least-squares fit plus Gaussian log likelihood at the variance MLE.
fn gaussian_cell(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
) -> std::result::Result<(Vec<f64>, f64, usize), String> {
    let ls = least_squares(design, y).map_err(|e| e.to_string())?;
    if !ls.full_rank() {
        return Err(format!(
            "rank-deficient design (rank {} of {})",
            ls.rank, ls.cols
        ));
    }
    let n = ls.rows as f64;
    let sigma2 = ls.rss / n;
    if !(sigma2 > 0.0) {
        return Err("zero residual variance".into());
    }
    let log_l = -0.5 * n * ((std::f64::consts::TAU * sigma2).ln() + 1.0);
    Ok((ls.coeffs, log_l, ls.rows))
}

/// One row of the factor-divergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorDivergence {
    pub n: usize,
    /// `n * log(C(n, k1) / C(n, k2))` in closed form.
    pub value: f64,
}

/// Closed-form `n * log(C(n,k1)/C(n,k2))` over a grid of sample sizes:
/// constant `-2*(k1-k2)` for the first factor (which is why it cannot
/// separate nested candidates asymptotically) and `-(k1-k2)*log n`,
/// diverging, for the second.
pub fn factor_divergence_probe(
    variant: MicVariant,
    k1: usize,
    k2: usize,
    n_grid: &[usize],
) -> Result<Vec<FactorDivergence>> {
    if k2 < 1 || k1 <= k2 {
        return Err(Error::Config(format!(
            "factor probe needs k1 > k2 >= 1, got k1={k1}, k2={k2}"
        )));
    }
    let dk = (k1 - k2) as f64;
    Ok(n_grid
        .iter()
        .map(|&n| FactorDivergence {
            n,
            value: match variant {
                MicVariant::Mic1 => -2.0 * dk,
                MicVariant::Mic2 => -dk * (n as f64).ln(),
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::mgice_bfgs;
    use crate::models::GaussianLocation;
    use crate::optim::BfgsConfig;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn factor_closed_forms() {
        let f2 = mic_factor(MicVariant::Mic2, 100, 5);
        assert!((f2 - 100f64.powf(-0.05)).abs() < 1e-15);
        assert!((f2 - 0.79433).abs() < 1e-5);
        let f1 = mic_factor(MicVariant::Mic1, 100, 5);
        assert!((f1 - (-0.1f64).exp()).abs() < 1e-15);
        assert!((f1 - 0.90484).abs() < 1e-5);
    }

    #[test]
    fn zero_gic_gives_zero_mic() {
        let g = GicValue {
            value: 0.0,
            n_effective: 50,
            truncation_l: 0,
        };
        assert_eq!(mic(&g, 3, MicVariant::Mic1), 0.0);
        assert_eq!(mic(&g, 3, MicVariant::Mic2), 0.0);
    }

    #[test]
    fn probe_matches_hand_values() {
        let n_e10 = (10f64.exp().round()) as usize; // e^10 ~ 22026
        let rows = factor_divergence_probe(MicVariant::Mic2, 4, 3, &[n_e10]).unwrap();
        assert!((rows[0].value + (n_e10 as f64).ln()).abs() < 1e-12);
        assert!((rows[0].value + 10.0).abs() < 2e-3); // e^10 rounded to integer n
        let rows1 = factor_divergence_probe(MicVariant::Mic1, 4, 3, &[7, 1000, 123456]).unwrap();
        for r in rows1 {
            assert_eq!(r.value, -2.0);
        }
    }

    #[test]
    fn probe_rejects_non_nested_counts() {
        assert!(factor_divergence_probe(MicVariant::Mic2, 3, 3, &[10]).is_err());
        assert!(factor_divergence_probe(MicVariant::Mic2, 2, 0, &[10]).is_err());
    }

    #[test]
    fn probe_agrees_with_actual_factors() {
        for variant in [MicVariant::Mic1, MicVariant::Mic2] {
            for &n in &[100usize, 10_000] {
                let row = factor_divergence_probe(variant, 7, 4, &[n]).unwrap()[0];
                let actual =
                    n as f64 * (mic_factor(variant, n, 7).ln() - mic_factor(variant, n, 4).ln());
                assert!(
                    (row.value - actual).abs() < 1e-9,
                    "{variant:?} n={n}: closed {} vs factors {actual}",
                    row.value
                );
            }
        }
    }

    #[test]
    fn ties_select_the_smaller_index() {
        assert_eq!(argbest(&[Some(1.0), Some(1.0), Some(0.5)], true), Some(0));
        assert_eq!(argbest(&[None, Some(2.0), Some(2.0)], true), Some(1));
        assert_eq!(argbest(&[Some(3.0), Some(3.0)], false), Some(0));
        assert_eq!(argbest(&[None, None], true), None);
    }

    #[test]
    fn bias_estimate_matches_the_quadratic_oracle() {
        // For the unit-variance location family, W = -(x-t)^2 + 2, so the
        // gradient outer product averages to 4*Var and the Hessian is
        // exactly -2, giving B -> 2 at the sample mean.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> = (0..2000)
            .map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data = Dataset::univariate(values).unwrap();
        let model = GaussianLocation::new(1.0).unwrap();
        let fit = mgice_bfgs(&data, &model, &[0.0], &BfgsConfig::default()).unwrap();
        let (value, bias) = gicc(&data, &model, &fit, None).unwrap();
        assert!((bias.b_value - 2.0).abs() < 0.2, "B = {}", bias.b_value);
        assert!(!bias.condition_flag);
        assert!((bias.d_hat[0] + 2.0).abs() < 1e-6, "D = {}", bias.d_hat[0]);
        assert!(
            (value - gicc_value(&fit.gic_at_opt, bias.b_value)).abs() < 1e-12
        );
        // Forcing the bias to zero recovers n*GIC.
        assert_eq!(
            gicc_value(&fit.gic_at_opt, 0.0),
            fit.gic_at_opt.n_effective as f64 * fit.gic_at_opt.value
        );
    }

    #[test]
    fn two_symmetric_points_give_a_finite_bias() {
        let data = Dataset::univariate(vec![-1.0, 1.0]).unwrap();
        let model = GaussianLocation::new(1.0).unwrap();
        let fit = mgice_bfgs(&data, &model, &[0.2], &BfgsConfig::default()).unwrap();
        let (_, bias) = gicc(&data, &model, &fit, None).unwrap();
        assert!(bias.b_value.is_finite());
        assert_eq!(bias.dim, 1);
    }

    #[test]
    fn aic_bic_difference_is_the_parameter_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..120).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::timeseries(values).unwrap();
        let (aic, bic) = aic_bic_gaussian(&data, 4).unwrap();
        for (a, b) in aic.candidates.iter().zip(&bic.candidates) {
            let (av, bv) = (a.criterion_value.unwrap(), b.criterion_value.unwrap());
            let p = a.param_count as f64;
            let n = (120 - 4) as f64;
            assert!(
                ((bv - av) - p * (n.ln() - 2.0)).abs() < 1e-9,
                "penalty gap off at order {}",
                a.order
            );
        }
    }

    #[test]
    fn bic_prefers_the_cubic_on_cubic_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| {
                3.0 - 1.5 * xi + 2.0 * xi * xi + 5.0 * xi * xi * xi
                    + 1e-3 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let data = Dataset::regression(x, y).unwrap();
        let (_, bic) = aic_bic_gaussian(&data, 6).unwrap();
        assert_eq!(bic.selected_k, 3);
    }

    #[test]
    fn white_noise_bic_picks_the_smallest_order_often() {
        let mut chosen_one = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let values: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let data = Dataset::timeseries(values).unwrap();
            let (_, bic) = aic_bic_gaussian(&data, 5).unwrap();
            if bic.selected_k == 1 {
                chosen_one += 1;
            }
            // The lag-1 coefficient should hover near zero.
            if let CandidateEstimate::LeastSquares { params, .. } = &bic.candidates[0].estimate {
                assert!(params[1].abs() < 0.25, "a1 = {}", params[1]);
            } else {
                panic!("expected a least-squares candidate");
            }
        }
        assert!(chosen_one > 10, "order 1 chosen {chosen_one}/20");
    }

    #[test]
    fn scan_rejects_oversized_vonmises_range() {
        let data = Dataset::unconditional(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(matches!(
            fit_candidates(&data, &VonMisesFamily, 3, &FitConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn warm_start_layouts() {
        let ar = ArBakerFamily.warm_start(3, &[0.4, -0.1, 2.0, 0.6, 0.3, 1.2]);
        assert_eq!(ar, vec![0.4, -0.1, 0.0, 2.0, 0.6, 0.3, 1.2]);
        let vm = VonMisesFamily.warm_start(2, &[1.0, 2.0, 0.5, 0.6]);
        assert_eq!(vm, vec![1.0, 2.0, 0.5, 0.6, 0.0]);
    }
}
