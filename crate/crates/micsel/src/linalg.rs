//! Small dense least-squares helper shared by initialization and the
//! Gaussian AIC/BIC baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct LeastSquaresFit {
    pub coeffs: Vec<f64>,
    pub rss: f64,
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LeastSquaresFit {
    /// Residual standard deviation with the usual rows-minus-columns
    /// degrees-of-freedom divisor.
    pub fn residual_sd(&self) -> f64 {
        let dof = self.rows.saturating_sub(self.cols).max(1);
        (self.rss / dof as f64).sqrt()
    }

    pub fn full_rank(&self) -> bool {
        self.rank == self.cols
    }
}

/// Minimum-norm least-squares solution of `design * coeffs ~ y` via SVD,
/// with numerical rank detection.
pub(crate) fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquaresFit> {
    let rows = design.nrows();
    let cols = design.ncols();
    if rows == 0 || cols == 0 || rows != y.len() {
        return Err(Error::Config(format!(
            "least squares needs a nonempty design matching y: {rows}x{cols} vs {}",
            y.len()
        )));
    }
    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_sv * rows.max(cols) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let coeffs = svd
        .solve(y, tol)
        .map_err(|e| Error::Config(format!("least-squares solve failed: {e}")))?;
    let rss = (design * &coeffs - y).norm_squared();
    Ok(LeastSquaresFit {
        coeffs: coeffs.iter().cloned().collect(),
        rss,
        rank,
        rows,
        cols,
    })
}
