//! BFGS quasi-Newton minimizer with a strong-Wolfe line search.
//!
//! The line search always probes the quadratic-interpolation minimizer
//! built from the unit-step value, so on quadratic objectives every search
//! is exact and the method terminates in at most `dim` iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Objective, OptimOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsConfig {
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 500,
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
/// Trial step budget per line search; exhaustion ends the run with the
/// best iterate and `converged = false`.
const MAX_TRIALS: usize = 40;
const ALPHA_MAX: f64 = 1e10;

pub(crate) fn minimize_bfgs<O: Objective>(
    obj: &mut O,
    init: &[f64],
    config: &BfgsConfig,
) -> Result<OptimOutcome> {
    if !(config.grad_tol > 0.0 && config.grad_tol.is_finite()) {
        return Err(Error::Config(format!(
            "bfgs grad_tol must be positive, got {}",
            config.grad_tol
        )));
    }
    let dim = obj.dim();
    let mut x = DVector::from_column_slice(init);
    let mut g = DVector::zeros(dim);
    let f0 = obj.value_grad(x.as_slice(), g.as_mut_slice())?;
    if !f0.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteAtInit);
    }
    let mut f = f0;
    let mut best_f = f;
    let mut best_x = x.clone();
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut iterations = 0usize;
    let mut converged = false;
    // A failed search along a quasi-Newton direction may only reflect stale
    // curvature; retry once from steepest descent before giving up. Starts
    // true because h starts as the identity.
    let mut steepest_tried = true;

    loop {
        if g.amax() < config.grad_tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        iterations += 1;

        let mut d = -(&h * &g);
        let mut dphi0 = d.dot(&g);
        if !(dphi0 < 0.0) {
            // Not a descent direction (stale curvature); restart from
            // steepest descent.
            h = DMatrix::identity(dim, dim);
            d = -g.clone();
            dphi0 = -g.norm_squared();
            if dphi0 == 0.0 {
                converged = true;
                break;
            }
        }

        match line_search(obj, &x, &d, f, dphi0)? {
            Search::Accepted {
                x: x_new,
                f: f_new,
                g: g_new,
            } => {
                let s = &x_new - &x;
                let y = &g_new - &g;
                let sy = s.dot(&y);
                if sy > 1e-12 * s.norm() * y.norm() {
                    let rho = 1.0 / sy;
                    let left = DMatrix::identity(dim, dim) - rho * &s * y.transpose();
                    h = &left * h * left.transpose() + rho * &s * s.transpose();
                }
                x = x_new;
                f = f_new;
                g = g_new;
                if f < best_f {
                    best_f = f;
                    best_x.copy_from(&x);
                }
                steepest_tried = false;
            }
            Search::Failed => {
                if steepest_tried {
                    break;
                }
                h = DMatrix::identity(dim, dim);
                steepest_tried = true;
            }
        }
    }

    Ok(OptimOutcome {
        x: best_x.as_slice().to_vec(),
        f: best_f,
        iterations,
        converged,
    })
}

enum Search {
    Accepted {
        x: DVector<f64>,
        f: f64,
        g: DVector<f64>,
    },
    Failed,
}

struct LineProbe<'a, O> {
    obj: &'a mut O,
    x0: &'a DVector<f64>,
    d: &'a DVector<f64>,
    x_buf: DVector<f64>,
    g_buf: DVector<f64>,
    trials: usize,
}

impl<'a, O: Objective> LineProbe<'a, O> {
    /// Value and directional derivative at `x0 + alpha*d`; non-finite
    /// values become +inf so they fail the acceptance tests.
    fn eval(&mut self, alpha: f64) -> Result<(f64, f64)> {
        self.trials += 1;
        self.x_buf.copy_from(self.x0);
        self.x_buf.axpy(alpha, self.d, 1.0);
        let v = self
            .obj
            .value_grad(self.x_buf.as_slice(), self.g_buf.as_mut_slice())?;
        let phi = if v.is_finite() { v } else { f64::INFINITY };
        Ok((phi, self.g_buf.dot(self.d)))
    }

    fn exhausted(&self) -> bool {
        self.trials >= MAX_TRIALS
    }

    fn accept(&self, f: f64) -> Search {
        Search::Accepted {
            x: self.x_buf.clone(),
            f,
            g: self.g_buf.clone(),
        }
    }
}

fn line_search<O: Objective>(
    obj: &mut O,
    x0: &DVector<f64>,
    d: &DVector<f64>,
    phi0: f64,
    dphi0: f64,
) -> Result<Search> {
    let dim = x0.len();
    let mut probe = LineProbe {
        obj,
        x0,
        d,
        x_buf: DVector::zeros(dim),
        g_buf: DVector::zeros(dim),
        trials: 0,
    };
    let armijo = |alpha: f64, phi: f64| phi <= phi0 + C1 * alpha * dphi0;
    let curvature = |dphi: f64| dphi.abs() <= C2 * dphi0.abs();

    let (phi1, dphi1) = probe.eval(1.0)?;
    let x1 = probe.x_buf.clone();
    let g1 = probe.g_buf.clone();

    // Quadratic-interpolation probe through (phi0, dphi0, phi(1)).
    let denom = phi1 - phi0 - dphi0;
    if denom.is_finite() && denom > 0.0 {
        let alpha_q = -dphi0 / (2.0 * denom);
        if alpha_q > 1e-12 && alpha_q < ALPHA_MAX && (alpha_q - 1.0).abs() > 1e-12 {
            let (phi_q, dphi_q) = probe.eval(alpha_q)?;
            if armijo(alpha_q, phi_q) && curvature(dphi_q) {
                return Ok(probe.accept(phi_q));
            }
        }
    }

    if armijo(1.0, phi1) && curvature(dphi1) {
        return Ok(Search::Accepted {
            x: x1,
            f: phi1,
            g: g1,
        });
    }

    // Bracketing phase using the unit-step knowledge.
    if !armijo(1.0, phi1) {
        return zoom(&mut probe, (0.0, phi0, dphi0), (1.0, phi1), phi0, dphi0);
    }
    if dphi1 >= 0.0 {
        return zoom(&mut probe, (1.0, phi1, dphi1), (0.0, phi0), phi0, dphi0);
    }
    let mut prev = (1.0, phi1, dphi1);
    let mut alpha = 2.0;
    loop {
        if probe.exhausted() {
            return Ok(Search::Failed);
        }
        let (phi, dphi) = probe.eval(alpha)?;
        if !armijo(alpha, phi) || phi >= prev.1 {
            return zoom(&mut probe, prev, (alpha, phi), phi0, dphi0);
        }
        if curvature(dphi) {
            return Ok(probe.accept(phi));
        }
        if dphi >= 0.0 {
            return zoom(&mut probe, (alpha, phi, dphi), (prev.0, prev.1), phi0, dphi0);
        }
        prev = (alpha, phi, dphi);
        if alpha >= ALPHA_MAX {
            return Ok(Search::Failed);
        }
        alpha = (alpha * 2.0).min(ALPHA_MAX);
    }
}

/// Narrows a bracket `[lo, hi]` (in either order) whose `lo` end satisfies
/// sufficient decrease, interpolating quadratically with a bisection
/// safeguard.
fn zoom<O: Objective>(
    probe: &mut LineProbe<'_, O>,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64),
    phi0: f64,
    dphi0: f64,
) -> Result<Search> {
    let armijo = |alpha: f64, phi: f64| phi <= phi0 + C1 * alpha * dphi0;
    let curvature = |dphi: f64| dphi.abs() <= C2 * dphi0.abs();
    loop {
        if probe.exhausted() {
            return Ok(Search::Failed);
        }
        let width = hi.0 - lo.0;
        if width.abs() < 1e-14 * lo.0.abs().max(1.0) {
            return Ok(Search::Failed);
        }
        let b = (hi.1 - lo.1 - lo.2 * width) / (width * width);
        let mut alpha = if b.is_finite() && b > 0.0 {
            lo.0 - lo.2 / (2.0 * b)
        } else {
            f64::NAN
        };
        let lo_bound = lo.0.min(hi.0) + 0.05 * width.abs();
        let hi_bound = lo.0.max(hi.0) - 0.05 * width.abs();
        if !(alpha >= lo_bound && alpha <= hi_bound) {
            alpha = lo.0 + 0.5 * width;
        }
        let (phi, dphi) = probe.eval(alpha)?;
        if !armijo(alpha, phi) || phi >= lo.1 {
            hi = (alpha, phi);
        } else {
            if curvature(dphi) {
                return Ok(probe.accept(phi));
            }
            if dphi * (hi.0 - lo.0) >= 0.0 {
                hi = (lo.0, lo.1);
            }
            lo = (alpha, phi, dphi);
        }
    }
}
