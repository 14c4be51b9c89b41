//! Graph-based imputation of missing covariates.
//!
//! Continuous columns use the harmonic solution over the weight graph,
//! discrete columns use label propagation. [`impute_sssi`] repeats the
//! column passes with the graph rebuilt from the current imputations.

mod continuous;
mod discrete;
mod sssi;

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use continuous::{impute_continuous_column, impute_continuous_iterative, ContinuousSolve};
pub use discrete::{
    impute_discrete_column, impute_discrete_column_traced, DiscreteSolve, LabelMatrix,
};
pub use sssi::impute_sssi;

use crate::data::{
    validate, ClassProbabilities, ColumnDiagnostics, ColumnKind, ColumnSchema, ImputationResult,
    MissingDataset, PatternIndex, SolverStatus,
};
use crate::error::{Error, Result};
use crate::kernel::{build_graph, GraphOptions, ScaleParams, WeightGraph};

pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// When the sequential variant rebuilds its graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepRefresh {
    /// Before every column, so later columns see this sweep's updates.
    #[default]
    PerColumn,
    /// Once per sweep, from the matrix as it stood when the sweep began.
    PerSweep,
}

/// How discrete columns reach the propagation fixed point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteSolver {
    /// Iterate from uniform rows until the change drops below `eps`.
    #[default]
    Propagation,
    /// Solve for the limit with one dense factorization.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Stopping tolerance for label propagation.
    pub eps: f64,
    pub max_iter: usize,
    pub include_self_weight: bool,
    pub refresh: SweepRefresh,
    #[serde(default)]
    pub discrete_solver: DiscreteSolver,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            include_self_weight: false,
            refresh: SweepRefresh::PerColumn,
            discrete_solver: DiscreteSolver::Propagation,
        }
    }
}

impl ImputeOptions {
    pub(crate) fn graph_options(&self, exclude_column: Option<usize>) -> GraphOptions {
        GraphOptions {
            exclude_column,
            include_self_weight: self.include_self_weight,
        }
    }
}

/// Imputes every column of `dataset` over one shared weight graph.
pub fn impute_all(
    dataset: &MissingDataset,
    params: &ScaleParams,
    options: &ImputeOptions,
) -> Result<ImputationResult> {
    let index = validate(dataset)?;
    let mut result = ImputationResult::skeleton(dataset, Some(*params));
    if !index.has_missing() {
        return Ok(result);
    }
    let graph = build_graph(dataset, params, options.graph_options(None))?;
    impute_with_graph(dataset, &index, &graph, options, &mut result)?;
    Ok(result)
}

/// Fills every incomplete column of `result` from `graph`.
pub(crate) fn impute_with_graph(
    dataset: &MissingDataset,
    index: &PatternIndex,
    graph: &WeightGraph,
    options: &ImputeOptions,
    result: &mut ImputationResult,
) -> Result<()> {
    let fills: Vec<Option<ColumnFill>> = (0..dataset.p())
        .into_par_iter()
        .map(|j| {
            if index.s0[j].is_empty() {
                return Ok(None);
            }
            let values: Vec<f64> = index.s1[j]
                .iter()
                .map(|&i| dataset.value(i, j).expect("observed entry"))
                .collect();
            fill_column(
                graph,
                dataset.column(j),
                &index.s0[j],
                &index.s1[j],
                &values,
                options,
            )
            .map(Some)
            .map_err(|e| e.in_column(j))
        })
        .collect::<Result<_>>()?;
    for (j, fill) in fills.into_iter().enumerate() {
        if let Some(fill) = fill {
            fill.write_into(result, j);
        }
    }
    Ok(())
}

/// Imputed values of one column together with its diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct ColumnFill {
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    pub diagnostics: ColumnDiagnostics,
    pub probs: Option<ClassProbabilities>,
}

impl ColumnFill {
    pub(crate) fn write_into(self, result: &mut ImputationResult, j: usize) {
        for (&i, &v) in self.rows.iter().zip(&self.values) {
            result.x_hat[(i, j)] = v;
        }
        result.columns[j] = self.diagnostics;
        result.class_probs[j] = self.probs;
    }
}

/// Imputes `missing` by propagating the labels `known_values` carried by the
/// subjects `known`. Discrete labels must be declared classes.
pub(crate) fn fill_column(
    graph: &WeightGraph,
    schema: &ColumnSchema,
    missing: &[usize],
    known: &[usize],
    known_values: &[f64],
    options: &ImputeOptions,
) -> Result<ColumnFill> {
    match &schema.kind {
        ColumnKind::Continuous => {
            let mean = known_values.iter().sum::<f64>() / known_values.len() as f64;
            let s = continuous::harmonic_solve(graph, missing, known, known_values, mean);
            Ok(ColumnFill {
                diagnostics: ColumnDiagnostics {
                    status: s.status,
                    imputed: s.rows.len(),
                    iterations: s.iterations,
                    converged: s.converged,
                    fallback_applied: s.fallback_subjects > 0,
                    fallback_subjects: s.fallback_subjects,
                    residual: s.residual,
                },
                rows: s.rows,
                values: s.values,
                probs: None,
            })
        }
        ColumnKind::Discrete { classes } => {
            let labels = known_values
                .iter()
                .map(|&v| {
                    schema
                        .class_index(v)
                        .ok_or_else(|| Error::InvalidSchema(format!("{v} is not a declared class")))
                })
                .collect::<Result<Vec<_>>>()?;
            let s = match options.discrete_solver {
                DiscreteSolver::Propagation => discrete::propagate_labels(
                    graph,
                    missing,
                    known,
                    &labels,
                    classes.len(),
                    options.eps,
                    options.max_iter,
                    &mut |_, _| {},
                ),
                DiscreteSolver::Direct => discrete::harmonic_labels(
                    graph,
                    missing,
                    known,
                    &labels,
                    classes.len(),
                    options.eps,
                    options.max_iter,
                ),
            };
            Ok(ColumnFill {
                diagnostics: ColumnDiagnostics {
                    status: if s.fallback_subjects > 0 {
                        SolverStatus::MeanFallback
                    } else if options.discrete_solver == DiscreteSolver::Direct
                        && s.labels.iterations == 0
                    {
                        SolverStatus::Direct
                    } else {
                        SolverStatus::LabelPropagation
                    },
                    imputed: missing.len(),
                    iterations: s.labels.iterations,
                    converged: s.labels.converged,
                    fallback_applied: s.fallback_subjects > 0,
                    fallback_subjects: s.fallback_subjects,
                    residual: 0.0,
                },
                values: s.hard.iter().map(|&c| classes[c]).collect(),
                probs: Some(ClassProbabilities {
                    rows: s.labels.rows.clone(),
                    probs: (0..s.labels.rows.len())
                        .map(|r| s.labels.probs.row(r).iter().copied().collect())
                        .collect(),
                }),
                rows: s.labels.rows,
            })
        }
    }
}

/// Missing subjects, observing subjects and observed values of column `j`,
/// after checking the column kind.
pub(crate) fn column_check(
    ds: &MissingDataset,
    j: usize,
    discrete: bool,
) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    if j >= ds.p() {
        return Err(Error::DimensionMismatch(format!(
            "column {j} out of range for {} columns",
            ds.p()
        )));
    }
    let col = ds.column(j);
    if col.is_discrete() != discrete {
        return Err(Error::WrongColumnKind {
            column: j,
            expected: if discrete { "discrete" } else { "continuous" },
            found: col.kind_name(),
        });
    }
    let (mut missing, mut known, mut values) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..ds.n() {
        match ds.value(i, j) {
            Some(v) => {
                known.push(i);
                values.push(v);
            }
            None => missing.push(i),
        }
    }
    if known.is_empty() {
        return Err(Error::EmptyObservedSet(j));
    }
    Ok((missing, known, values))
}

/// For each entry of `missing`, whether a chain of positive weights leads
/// from it to some subject in `known`.
pub(crate) fn reachable(graph: &WeightGraph, missing: &[usize], known: &[usize]) -> Vec<bool> {
    let m = missing.len();
    let mut reach = vec![false; m];
    let mut queue = VecDeque::new();
    for (r, &i) in missing.iter().enumerate() {
        let row = graph.w_row(i);
        if known.iter().any(|&k| row[k] > 0.0) {
            reach[r] = true;
            queue.push_back(r);
        }
    }
    // Walk edges backwards: if `c` reaches, so does every `r` with w(r, c) > 0.
    while let Some(c) = queue.pop_front() {
        let target = missing[c];
        for (r, &i) in missing.iter().enumerate() {
            if !reach[r] && graph.w(i, target) > 0.0 {
                reach[r] = true;
                queue.push_back(r);
            }
        }
    }
    reach
}
