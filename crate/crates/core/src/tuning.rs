//! Grid selection of the normalized scale `tau`.
//!
//! Two criteria are offered. The interchange criterion imputes each column,
//! then swaps roles and reconstructs the observed entries from the
//! imputations; it never looks at a regression model. The cross-validation
//! criterion scores leave-one-out least-squares predictions of the response
//! on the imputed design.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate, ImputationResult, MissingDataset, PatternIndex};
use crate::error::{Error, Result};
use crate::impute::{fill_column, impute_with_graph, DiscreteSolver, ImputeOptions};
use crate::kernel::{PairDistances, ScaleParams, WeightGraph};
use crate::regression::{fit_ols, loo_predictions, with_intercept};

/// Equally spaced grid `lo, ..., hi` with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 2.0,
            steps: 21,
        }
    }
}

impl TauGrid {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::InvalidGrid(format!("need 0 <= lo < hi, got {lo}:{hi}")));
        }
        if steps < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 steps, got {steps}")));
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * k as f64 / last
                }
            })
            .collect()
    }
}

impl FromStr for TauGrid {
    type Err = Error;

    /// Parses `lo:hi:steps`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let bad = || Error::InvalidGrid(format!("expected lo:hi:steps, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].parse().map_err(|_| bad())?;
        let hi = parts[1].parse().map_err(|_| bad())?;
        let steps = parts[2].parse().map_err(|_| bad())?;
        Self::new(lo, hi, steps)
    }
}

impl fmt::Display for TauGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Interchangeable,
    CrossValidation,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Interchangeable => "interchangeable",
            Criterion::CrossValidation => "cv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Imputation settings used while scoring. Discrete columns default to
    /// the direct solve.
    pub impute: ImputeOptions,
    /// Keep the target column in the distances of the swap step.
    pub swap_keep_column: bool,
    /// Add an intercept to the cross-validated regression.
    pub intercept: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            impute: ImputeOptions {
                discrete_solver: DiscreteSolver::Direct,
                ..ImputeOptions::default()
            },
            swap_keep_column: false,
            intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub criterion: Criterion,
    pub grid: Vec<f64>,
    /// Score per grid point; `None` where the evaluation failed.
    pub scores: Vec<Option<f64>>,
    pub tau_hat: f64,
    pub lambda_hat: f64,
    pub n: usize,
    pub d0: usize,
}

impl TuneReport {
    pub fn params(&self) -> ScaleParams {
        ScaleParams {
            lambda1: self.lambda_hat,
            lambda2: self.lambda_hat,
            tau: Some(self.tau_hat),
        }
    }

    /// Versioned TSV: a comment line with the selection, then one row per
    /// grid point, `NA` where the evaluation failed.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# ssimpute tune v1\n# criterion={} n={} d0={} tau_hat={} lambda_hat={}\ntau\tscore\tselected\n",
            self.criterion, self.n, self.d0, self.tau_hat, self.lambda_hat
        );
        for (t, s) in self.grid.iter().zip(&self.scores) {
            let score = s.map_or_else(|| "NA".to_string(), |v| v.to_string());
            out.push_str(&format!("{t}\t{score}\t{}\n", *t == self.tau_hat));
        }
        out
    }

    /// Grid points whose evaluation failed.
    pub fn failed(&self) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.scores)
            .filter(|(_, s)| s.is_none())
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Index of the smallest score, earliest on ties. Failed points are skipped.
pub fn select_argmin(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Interchange criterion at a single `tau`.
pub fn q_criterion(dataset: &MissingDataset, tau: f64, options: &TuneOptions) -> Result<f64> {
    let index = validate(dataset)?;
    let params = ScaleParams::from_tau(tau, dataset.n(), index.d0)?;
    q_scores(dataset, &index, &[params], options)
        .pop()
        .expect("one score")
}

/// Interchange criterion at explicit scale parameters.
pub fn q_criterion_params(
    dataset: &MissingDataset,
    params: &ScaleParams,
    options: &TuneOptions,
) -> Result<f64> {
    let index = validate(dataset)?;
    q_scores(dataset, &index, &[*params], options)
        .pop()
        .expect("one score")
}

/// Criterion value for every entry of `params`. Distances are computed
/// once per column and shared by all scales.
fn q_scores(
    dataset: &MissingDataset,
    index: &PatternIndex,
    params: &[ScaleParams],
    options: &TuneOptions,
) -> Vec<Result<f64>> {
    let columns: Vec<usize> = (0..dataset.p())
        .filter(|&j| !index.s0[j].is_empty())
        .collect();
    if columns.is_empty() {
        return params.iter().map(|_| Err(Error::NothingToInterchange)).collect();
    }
    let mut totals: Vec<Result<f64>> = params.iter().map(|_| Ok(0.0)).collect();
    let shared = options
        .swap_keep_column
        .then(|| PairDistances::compute(dataset, None));
    for j in columns {
        let own;
        let dist = match &shared {
            Some(d) => d,
            None => {
                own = PairDistances::compute(dataset, Some(j));
                &own
            }
        };
        let errors: Vec<Result<f64>> = params
            .par_iter()
            .zip(&totals)
            .map(|(p, total)| match total {
                Ok(_) => swap_error(dataset, index, dist, p, j, options)
                    .map_err(|e| e.in_column(j)),
                Err(_) => Ok(0.0),
            })
            .collect();
        for (total, e) in totals.iter_mut().zip(errors) {
            if let Ok(t) = total {
                match e {
                    Ok(v) => *t += v,
                    Err(err) => *total = Err(err),
                }
            }
        }
    }
    totals
}

/// Reconstruction error of column `j` after imputing its missing entries and
/// then treating its observed entries as missing.
fn swap_error(
    dataset: &MissingDataset,
    index: &PatternIndex,
    dist: &PairDistances,
    params: &ScaleParams,
    j: usize,
    options: &TuneOptions,
) -> Result<f64> {
    let graph = WeightGraph::from_distances(dist, params, options.impute.include_self_weight)?;
    let schema = dataset.column(j);
    let (s0, s1) = (&index.s0[j], &index.s1[j]);
    let truth: Vec<f64> = s1
        .iter()
        .map(|&i| dataset.value(i, j).expect("observed entry"))
        .collect();
    let forward = fill_column(&graph, schema, s0, s1, &truth, &options.impute)?;
    let back = fill_column(&graph, schema, s1, s0, &forward.values, &options.impute)?;
    debug_assert_eq!(&back.rows, s1);
    Ok(if schema.is_discrete() {
        back.values
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a != b)
            .count() as f64
    } else {
        back.values
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Picks `tau` by minimizing the interchange criterion over `grid`.
pub fn tune_interchangeable(
    dataset: &MissingDataset,
    grid: &TauGrid,
    options: &TuneOptions,
) -> Result<TuneReport> {
    let index = validate(dataset)?;
    let taus = grid.points();
    let params = taus
        .iter()
        .map(|&t| ScaleParams::from_tau(t, dataset.n(), index.d0))
        .collect::<Result<Vec<_>>>()?;
    let results = q_scores(dataset, &index, &params, options);
    report(Criterion::Interchangeable, dataset.n(), index.d0, taus, results)
}

/// Picks `tau` by minimizing the leave-one-out prediction error of the
/// least-squares fit on the imputed design.
pub fn tune_cv(dataset: &MissingDataset, grid: &TauGrid, options: &TuneOptions) -> Result<TuneReport> {
    if !dataset.response_fully_observed() {
        return Err(Error::ResponseNotObserved);
    }
    let index = validate(dataset)?;
    let taus = grid.points();
    let results: Vec<Result<f64>> = taus
        .par_iter()
        .map(|&t| {
            let params = ScaleParams::from_tau(t, dataset.n(), index.d0)?;
            cv_score(dataset, &index, &params, options)
        })
        .collect();
    report(Criterion::CrossValidation, dataset.n(), index.d0, taus, results)
}

/// Sum of squared leave-one-out errors at one scale.
pub fn cv_score(
    dataset: &MissingDataset,
    index: &PatternIndex,
    params: &ScaleParams,
    options: &TuneOptions,
) -> Result<f64> {
    let mut result = ImputationResult::skeleton(dataset, Some(*params));
    if index.has_missing() {
        let graph = crate::kernel::build_graph(dataset, params, options.impute.graph_options(None))?;
        impute_with_graph(dataset, index, &graph, &options.impute, &mut result)?;
    }
    let x = if options.intercept {
        with_intercept(&result.x_hat)
    } else {
        result.x_hat
    };
    let y = DVector::from_column_slice(dataset.responses());
    let fit = fit_ols(&x, &y)?;
    let loo = loo_predictions(&fit, &x, &y)?;
    Ok(loo.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn report(
    criterion: Criterion,
    n: usize,
    d0: usize,
    grid: Vec<f64>,
    results: Vec<Result<f64>>,
) -> Result<TuneReport> {
    let scores: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().copied()).collect();
    let Some(best) = select_argmin(&scores) else {
        return Err(common_failure(results));
    };
    let tau_hat = grid[best];
    Ok(TuneReport {
        criterion,
        lambda_hat: tau_hat * ScaleParams::rate_factor(n, d0),
        tau_hat,
        grid,
        scores,
        n,
        d0,
    })
}

/// The shared error when every grid point failed the same way, otherwise
/// [`Error::AllGridPointsFailed`].
fn common_failure(results: Vec<Result<f64>>) -> Error {
    let mut errors = results.into_iter().filter_map(|r| r.err());
    let Some(first) = errors.next() else {
        return Error::AllGridPointsFailed;
    };
    let kind = first.kind();
    if errors.all(|e| e.kind() == kind) {
        first
    } else {
        Error::AllGridPointsFailed
    }
}

/// Result of the two-parameter search over separate response and covariate
/// scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTuneReport {
    pub grid1: Vec<f64>,
    pub grid2: Vec<f64>,
    /// Row-major over `grid1 x grid2`.
    pub scores: Vec<Option<f64>>,
    pub tau1_hat: f64,
    pub tau2_hat: f64,
    pub params: ScaleParams,
}

/// Interchange criterion over a product grid of `(tau1, tau2)`.
pub fn tune_interchangeable_pair(
    dataset: &MissingDataset,
    grid1: &TauGrid,
    grid2: &TauGrid,
    options: &TuneOptions,
) -> Result<PairTuneReport> {
    let index = validate(dataset)?;
    let (g1, g2) = (grid1.points(), grid2.points());
    let mut params = Vec::with_capacity(g1.len() * g2.len());
    for &t1 in &g1 {
        for &t2 in &g2 {
            params.push(ScaleParams::from_tau_pair(t1, t2, dataset.n(), index.d0)?);
        }
    }
    let results = q_scores(dataset, &index, &params, options);
    let scores: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().copied()).collect();
    let Some(best) = select_argmin(&scores) else {
        return Err(common_failure(results));
    };
    Ok(PairTuneReport {
        tau1_hat: g1[best / g2.len()],
        tau2_hat: g2[best % g2.len()],
        params: params[best],
        grid1: g1,
        grid2: g2,
        scores,
    })
}
