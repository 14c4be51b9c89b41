//! Imputation, estimation and prediction accuracy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Accuracy of one replication. The raw variants are plain Euclidean
/// norms; the rmse variants divide the squared error by the number of
/// imputed entries or test subjects.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RepMetrics {
    pub ia_raw: f64,
    pub ia_rmse: f64,
    pub ea: f64,
    pub pa_raw: f64,
    pub pa_rmse: f64,
}

impl RepMetrics {
    pub const NAMES: [&'static str; 5] = ["ia_raw", "ia_rmse", "ea", "pa_raw", "pa_rmse"];

    pub fn values(&self) -> [f64; 5] {
        [self.ia_raw, self.ia_rmse, self.ea, self.pa_raw, self.pa_rmse]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            ia_raw: v[0],
            ia_rmse: v[1],
            ea: v[2],
            pa_raw: v[3],
            pa_rmse: v[4],
        }
    }
}

/// `(||x_hat - x||_F, rmse over imputed entries)`.
pub fn imputation_accuracy(
    x_hat: &DMatrix<f64>,
    x_true: &DMatrix<f64>,
    imputed: &DMatrix<bool>,
) -> (f64, f64) {
    let sse: f64 = x_hat
        .iter()
        .zip(x_true.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let count = imputed.iter().filter(|&&m| m).count();
    let rmse = if count == 0 {
        0.0
    } else {
        (sse / count as f64).sqrt()
    };
    (sse.sqrt(), rmse)
}

pub fn estimation_accuracy(beta_hat: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (beta_hat - beta).norm()
}

/// `(||y_hat - y||, rmse)`.
pub fn prediction_accuracy(y_hat: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let raw = (y_hat - y).norm();
    (raw, raw / (y.len().max(1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_imputation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mask = DMatrix::from_element(2, 2, false);
        assert_eq!(imputation_accuracy(&x, &x, &mask), (0.0, 0.0));
    }

    #[test]
    fn hand_frobenius() {
        let truth = DMatrix::zeros(2, 2);
        let hat = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mask = DMatrix::from_row_slice(2, 2, &[false, true, true, false]);
        let (raw, rmse) = imputation_accuracy(&hat, &truth, &mask);
        assert!((raw - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse, 1.0);
    }

    #[test]
    fn exact_coefficients() {
        let b = DVector::from_element(3, 1.0);
        assert_eq!(estimation_accuracy(&b, &b), 0.0);
        let (raw, rmse) = prediction_accuracy(&DVector::from_vec(vec![3.0, 0.0]), &DVector::zeros(2));
        assert_eq!(raw, 3.0);
        assert!((rmse - 3.0 / 2f64.sqrt()).abs() < 1e-15);
    }
}
