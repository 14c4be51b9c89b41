//! Ordinary least squares on an imputed design.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of a triangular pivot below which the design counts as
/// rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;
/// Leverages this close to one make leave-one-out prediction undefined.
const LEVERAGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    /// Residual sum of squares over `n - p`.
    pub sigma2_hat: f64,
    pub leverages: DVector<f64>,
    pub residuals: DVector<f64>,
}

impl OlsFit {
    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Least squares through a thin QR factorization. No intercept is added.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::DimensionMismatch(format!(
            "least squares needs more subjects than covariates, got n={n}, p={p}"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("design or response is not finite".into()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let diag_max = r.diagonal().amax();
    if diag_max == 0.0 || r.diagonal().iter().any(|d| d.abs() < RANK_TOLERANCE * diag_max) {
        return Err(Error::SingularDesign);
    }
    let qty = q.transpose() * y;
    let beta_hat = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;
    let residuals = y - x * &beta_hat;
    let leverages = DVector::from_iterator(n, q.row_iter().map(|row| row.norm_squared()));
    Ok(OlsFit {
        sigma2_hat: residuals.norm_squared() / (n - p) as f64,
        beta_hat,
        leverages,
        residuals,
    })
}

pub fn predict(fit: &OlsFit, x0: &[f64]) -> Result<f64> {
    if x0.len() != fit.p() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} covariates, got {}",
            fit.p(),
            x0.len()
        )));
    }
    Ok(x0.iter().zip(fit.beta_hat.iter()).map(|(a, b)| a * b).sum())
}

/// Predictions for every row of `x`.
pub fn predict_rows(fit: &OlsFit, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != fit.p() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} covariates, got {}",
            fit.p(),
            x.ncols()
        )));
    }
    Ok(x * &fit.beta_hat)
}

/// Leave-one-out predictions `y_i - e_i / (1 - h_ii)`.
pub fn loo_predictions(fit: &OlsFit, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = fit.residuals.len();
    if x.nrows() != n || y.len() != n || x.ncols() != fit.p() {
        return Err(Error::DimensionMismatch(
            "design and response must match the fitted model".into(),
        ));
    }
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let h = fit.leverages[i];
        if h >= 1.0 - LEVERAGE_TOLERANCE {
            return Err(Error::LeverageOne(i));
        }
        out[i] = y[i] - fit.residuals[i] / (1.0 - h);
    }
    Ok(out)
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}
