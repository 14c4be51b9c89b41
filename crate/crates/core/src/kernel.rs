//! Gaussian similarity graph over subjects.
//!
//! Two subjects are compared on their responses and on the covariates both
//! of them observe. Continuous covariates contribute their squared
//! difference, discrete covariates contribute 0 for the same class and 1
//! otherwise. The similarity is
//!
//! ```text
//! a(i, k) = exp(-lambda1 * (y_i - y_k)^2 - lambda2 * sum_shared d^2)
//! ```
//!
//! with the response term dropped when either response is unobserved. The
//! row-normalized matrix `W` drives every imputation routine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MissingDataset;
use crate::error::{Error, Result};

/// Row sums below this are treated as underflow.
pub const UNDERFLOW_ROW_SUM: f64 = 1e-300;

/// Kernel scales. `lambda` is the reciprocal bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Normalized scale, set when the lambdas were derived from it.
    pub tau: Option<f64>,
}

impl ScaleParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidScale(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self {
            lambda1,
            lambda2,
            tau: None,
        })
    }

    pub fn shared(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda)
    }

    /// `n^(1/(2*d0+1))`, the growth rate tying `tau` to `lambda`.
    pub fn rate_factor(n: usize, d0: usize) -> f64 {
        (n as f64).powf(1.0 / (2.0 * d0 as f64 + 1.0))
    }

    /// Shared scale `lambda1 = lambda2 = tau * n^(1/(2*d0+1))`.
    pub fn from_tau(tau: f64, n: usize, d0: usize) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidScale(format!("tau must be finite and >= 0, got {tau}")));
        }
        let lambda = tau * Self::rate_factor(n, d0);
        Ok(Self {
            lambda1: lambda,
            lambda2: lambda,
            tau: Some(tau),
        })
    }

    /// Separate normalized scales for the response and covariate kernels.
    pub fn from_tau_pair(tau1: f64, tau2: f64, n: usize, d0: usize) -> Result<Self> {
        let f = Self::rate_factor(n, d0);
        let mut params = Self::new(tau1 * f, tau2 * f)?;
        if tau1 == tau2 {
            params.tau = Some(tau1);
        }
        Ok(params)
    }
}

/// Graph construction switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Drop this covariate from every pairwise distance.
    pub exclude_column: Option<usize>,
    /// Keep a unit self-similarity on the diagonal before normalizing.
    pub include_self_weight: bool,
}

impl GraphOptions {
    pub fn excluding(column: usize) -> Self {
        Self {
            exclude_column: Some(column),
            ..Self::default()
        }
    }
}

#[inline]
fn gaussian(params: &ScaleParams, dy2: Option<f64>, dx2: f64) -> f64 {
    (-exponent(params, dy2, dx2)).exp()
}

#[inline]
fn exponent(params: &ScaleParams, dy2: Option<f64>, dx2: f64) -> f64 {
    match dy2 {
        Some(d) => params.lambda1 * d + params.lambda2 * dx2,
        None => params.lambda2 * dx2,
    }
}

fn shared_distance(ds: &MissingDataset, i1: usize, i2: usize, exclude: Option<usize>) -> f64 {
    let mut acc = 0.0;
    for k in 0..ds.p() {
        if Some(k) == exclude {
            continue;
        }
        if let (Some(a), Some(b)) = (ds.value(i1, k), ds.value(i2, k)) {
            acc += if ds.column(k).is_discrete() {
                if a == b { 0.0 } else { 1.0 }
            } else {
                (a - b) * (a - b)
            };
        }
    }
    acc
}

/// Similarity of two subjects whose responses are both observed.
///
/// If either response is masked the response factor is left out, exactly as
/// in [`pair_weight_partial_y`].
pub fn pair_weight(ds: &MissingDataset, i1: usize, i2: usize, params: &ScaleParams) -> f64 {
    pair_weight_partial_y(ds, i1, i2, params)
}

/// Similarity that omits the response kernel when either response is masked.
pub fn pair_weight_partial_y(
    ds: &MissingDataset,
    i1: usize,
    i2: usize,
    params: &ScaleParams,
) -> f64 {
    let dy2 = match (ds.response(i1), ds.response(i2)) {
        (Some(a), Some(b)) => Some((a - b) * (a - b)),
        _ => None,
    };
    gaussian(params, dy2, shared_distance(ds, i1, i2, None))
}

/// Scale-free pairwise squared distances, reusable across scale values.
#[derive(Debug, Clone)]
pub struct PairDistances {
    n: usize,
    /// Squared response difference, NaN when either response is masked.
    dy2: Vec<f64>,
    /// Sum of squared covariate differences over shared columns.
    dx2: Vec<f64>,
}

impl PairDistances {
    pub fn compute(ds: &MissingDataset, exclude_column: Option<usize>) -> Self {
        let (n, p) = (ds.n(), ds.p());
        // Row-major copies keep the inner loop on contiguous memory.
        let mut vals = vec![0.0; n * p];
        let mut obs = vec![false; n * p];
        for i in 0..n {
            for k in 0..p {
                if Some(k) == exclude_column {
                    continue;
                }
                if let Some(v) = ds.value(i, k) {
                    vals[i * p + k] = v;
                    obs[i * p + k] = true;
                }
            }
        }
        let discrete: Vec<bool> = ds.schema().iter().map(|c| c.is_discrete()).collect();
        let y = ds.responses();
        let y_obs = ds.response_mask();

        let mut dy2 = vec![0.0; n * n];
        let mut dx2 = vec![0.0; n * n];
        dy2.par_chunks_mut(n)
            .zip(dx2.par_chunks_mut(n))
            .enumerate()
            .for_each(|(i, (dy_row, dx_row))| {
                let xi = &vals[i * p..(i + 1) * p];
                let oi = &obs[i * p..(i + 1) * p];
                for i2 in 0..n {
                    dy_row[i2] = if y_obs[i] && y_obs[i2] {
                        let d = y[i] - y[i2];
                        d * d
                    } else {
                        f64::NAN
                    };
                    let xk = &vals[i2 * p..(i2 + 1) * p];
                    let ok = &obs[i2 * p..(i2 + 1) * p];
                    let mut acc = 0.0;
                    for k in 0..p {
                        if oi[k] && ok[k] {
                            acc += if discrete[k] {
                                if xi[k] == xk[k] { 0.0 } else { 1.0 }
                            } else {
                                let d = xi[k] - xk[k];
                                d * d
                            };
                        }
                    }
                    dx_row[i2] = acc;
                }
            });
        Self { n, dy2, dx2 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn response_term(&self, i: usize, k: usize) -> Option<f64> {
        let v = self.dy2[i * self.n + k];
        (!v.is_nan()).then_some(v)
    }
}

/// Similarity matrix `A` with its row-normalized form `W`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    n: usize,
    a: Vec<f64>,
    w: Vec<f64>,
    row_fallbacks: Vec<usize>,
    symmetric: bool,
}

impl WeightGraph {
    pub fn from_distances(
        dist: &PairDistances,
        params: &ScaleParams,
        include_self_weight: bool,
    ) -> Result<Self> {
        let n = dist.n;
        let mut a = vec![0.0; n * n];
        let mut w = vec![0.0; n * n];
        // Upper triangle first, then mirrored: A is symmetric.
        a.par_chunks_mut(n).enumerate().for_each(|(i, a_row)| {
            a_row[i] = if include_self_weight { 1.0 } else { 0.0 };
            for k in i + 1..n {
                a_row[k] = gaussian(params, dist.response_term(i, k), dist.dx2[i * n + k]);
            }
        });
        for i in 0..n {
            for k in 0..i {
                a[i * n + k] = a[k * n + i];
            }
        }
        let fallback: Vec<bool> = a
            .par_chunks(n)
            .zip(w.par_chunks_mut(n))
            .enumerate()
            .map(|(i, (a_row, w_row))| {
                let sum: f64 = a_row.iter().sum();
                if sum >= UNDERFLOW_ROW_SUM {
                    for (wk, ak) in w_row.iter_mut().zip(a_row) {
                        *wk = ak / sum;
                    }
                    false
                } else {
                    // Limit of the normalized weights as the scale grows:
                    // all mass on the closest neighbor.
                    let mut best = None;
                    let mut best_e = f64::INFINITY;
                    for k in (0..n).filter(|&k| k != i) {
                        let e = exponent(params, dist.response_term(i, k), dist.dx2[i * n + k]);
                        if e < best_e {
                            best_e = e;
                            best = Some(k);
                        }
                    }
                    if let Some(k) = best {
                        w_row[k] = 1.0;
                    }
                    true
                }
            })
            .collect();
        let row_fallbacks: Vec<usize> = fallback
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        if n > 0 && row_fallbacks.len() == n {
            return Err(Error::AllRowsDegenerate);
        }
        Ok(Self {
            n,
            a,
            w,
            row_fallbacks,
            symmetric: true,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, i: usize, k: usize) -> f64 {
        self.a[i * self.n + k]
    }

    #[inline]
    pub fn w(&self, i: usize, k: usize) -> f64 {
        self.w[i * self.n + k]
    }

    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// Graph with the given row-normalized weights, used to pin down
    /// solver behavior on hand-built instances.
    #[cfg(test)]
    pub(crate) fn from_normalized(n: usize, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), n * n);
        Self {
            n,
            a: w.clone(),
            w,
            row_fallbacks: Vec::new(),
            symmetric: false,
        }
    }

    /// Whether `A` is symmetric, which holds for every kernel graph.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Rows whose similarities underflowed and were replaced by a single
    /// nearest-neighbor link.
    pub fn row_fallbacks(&self) -> &[usize] {
        &self.row_fallbacks
    }
}

/// Builds the similarity graph of `ds` at scale `params`.
pub fn build_graph(
    ds: &MissingDataset,
    params: &ScaleParams,
    options: GraphOptions,
) -> Result<WeightGraph> {
    if let Some(j) = options.exclude_column {
        if j >= ds.p() {
            return Err(Error::DimensionMismatch(format!(
                "excluded column {j} out of range for {} columns",
                ds.p()
            )));
        }
    }
    let dist = PairDistances::compute(ds, options.exclude_column);
    WeightGraph::from_distances(&dist, params, options.include_self_weight)
}
