//! Label propagation for discrete columns.
//!
//! Class probabilities of the missing subjects start uniform and are
//! repeatedly replaced by the weighted average of their neighbors'
//! probabilities, observed subjects contributing one-hot rows. Rows are
//! renormalized after every step.

use nalgebra::DMatrix;

use super::continuous::System;
use super::{column_check, reachable};
use crate::data::MissingDataset;
use crate::error::Result;
use crate::kernel::WeightGraph;

/// Class probabilities of the imputed subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub rows: Vec<usize>,
    /// `rows.len() x C`, one probability vector per row.
    pub probs: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LabelMatrix {
    /// Most probable class of every row, ties to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.probs.nrows())
            .map(|r| argmax(self.probs.row(r).iter().copied()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolve {
    pub labels: LabelMatrix,
    /// Class index per imputed subject.
    pub hard: Vec<usize>,
    /// Subjects with no path to an observed label; they receive the
    /// observed class proportions.
    pub fallback_subjects: usize,
}

impl DiscreteSolve {
    /// Hard labels mapped back to the declared class values.
    pub fn class_values(&self, classes: &[f64]) -> Vec<f64> {
        self.hard.iter().map(|&c| classes[c]).collect()
    }
}

pub fn impute_discrete_column(
    graph: &WeightGraph,
    ds: &MissingDataset,
    j: usize,
    eps: f64,
    max_iter: usize,
) -> Result<DiscreteSolve> {
    impute_discrete_column_traced(graph, ds, j, eps, max_iter, &mut |_, _| {})
}

/// As [`impute_discrete_column`], calling `on_iter(k, probs)` after each
/// normalized step. `probs` is row-major `|S0| x C`.
pub fn impute_discrete_column_traced(
    graph: &WeightGraph,
    ds: &MissingDataset,
    j: usize,
    eps: f64,
    max_iter: usize,
    on_iter: &mut dyn FnMut(usize, &[f64]),
) -> Result<DiscreteSolve> {
    let (missing, known, values) = column_check(ds, j, true)?;
    let col = ds.column(j);
    let labels: Vec<usize> = values
        .iter()
        .map(|&v| col.class_index(v).expect("validated class"))
        .collect();
    Ok(propagate_labels(
        graph,
        &missing,
        &known,
        &labels,
        col.classes().len(),
        eps,
        max_iter,
        on_iter,
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate_labels(
    graph: &WeightGraph,
    missing: &[usize],
    known: &[usize],
    labels: &[usize],
    classes: usize,
    eps: f64,
    max_iter: usize,
    on_iter: &mut dyn FnMut(usize, &[f64]),
) -> DiscreteSolve {
    let m = missing.len();
    let c = classes;
    let reach = reachable(graph, missing, known);
    let proportions = class_proportions(labels, c);
    if let Some(solve) = single_class(missing, &proportions, &reach) {
        return solve;
    }

    // Fixed inflow from observed labels and from unreachable subjects,
    // which are pinned to the observed proportions.
    let mut inflow = vec![0.0; m * c];
    for (r, &i) in missing.iter().enumerate() {
        let row = graph.w_row(i);
        let out = &mut inflow[r * c..(r + 1) * c];
        for (&k, &l) in known.iter().zip(labels) {
            out[l] += row[k];
        }
        for (q, &k) in missing.iter().enumerate() {
            if !reach[q] && row[k] > 0.0 {
                for (o, p) in out.iter_mut().zip(&proportions) {
                    *o += row[k] * p;
                }
            }
        }
    }
    let active: Vec<usize> = (0..m).filter(|&r| reach[r]).collect();
    let ma = active.len();
    let coupling = DMatrix::from_fn(ma, ma, |a, b| graph.w(missing[active[a]], missing[active[b]]));
    let fixed = DMatrix::from_fn(ma, c, |a, k| inflow[active[a] * c + k]);

    let mut probs = vec![1.0 / c as f64; m * c];
    for r in (0..m).filter(|&r| !reach[r]) {
        probs[r * c..(r + 1) * c].copy_from_slice(&proportions);
    }

    let mut current = DMatrix::from_element(ma, c, 1.0 / c as f64);
    let mut next = fixed.clone();
    let mut iterations = 0;
    let mut converged = ma == 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        next.copy_from(&fixed);
        next.gemm(1.0, &coupling, &current, 1.0);
        for a in 0..ma {
            let total = next.row(a).sum();
            if total > 0.0 && total.is_finite() {
                next.row_mut(a).unscale_mut(total);
            } else {
                next.row_mut(a).fill(1.0 / c as f64);
            }
        }
        let change = (&next - &current).norm();
        std::mem::swap(&mut current, &mut next);
        for (a, &r) in active.iter().enumerate() {
            for k in 0..c {
                probs[r * c + k] = current[(a, k)];
            }
        }
        on_iter(iterations, &probs);
        converged = change < eps;
    }
    for r in 0..m {
        normalize(&mut probs[r * c..(r + 1) * c], c);
    }

    let labels = LabelMatrix {
        rows: missing.to_vec(),
        probs: DMatrix::from_row_slice(m, c, &probs),
        iterations,
        converged,
    };
    DiscreteSolve {
        hard: labels.hard_labels(),
        labels,
        fallback_subjects: reach.iter().filter(|&&r| !r).count(),
    }
}

fn class_proportions(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut proportions = vec![0.0; classes];
    for &l in labels {
        proportions[l] += 1.0;
    }
    let total = labels.len().max(1) as f64;
    proportions.iter_mut().for_each(|v| *v /= total);
    proportions
}

/// Fixed point of [`propagate_labels`] without iterating. Every step keeps
/// row sums at one, so the limit solves the harmonic system with one
/// right-hand side per class. Falls back to propagation when the dense
/// solve is rejected.
#[allow(clippy::too_many_arguments)]
pub(crate) fn harmonic_labels(
    graph: &WeightGraph,
    missing: &[usize],
    known: &[usize],
    labels: &[usize],
    classes: usize,
    eps: f64,
    max_iter: usize,
) -> DiscreteSolve {
    let c = classes;
    let reach = reachable(graph, missing, known);
    let proportions = class_proportions(labels, c);
    if let Some(solve) = single_class(missing, &proportions, &reach) {
        return solve;
    }
    let solvable: Vec<usize> = missing.iter().zip(&reach).filter(|p| *p.1).map(|p| *p.0).collect();
    let mut labelled = known.to_vec();
    let mut values = Vec::with_capacity((known.len() + missing.len()) * c);
    for &l in labels {
        values.extend((0..c).map(|k| if k == l { 1.0 } else { 0.0 }));
    }
    for (&i, _) in missing.iter().zip(&reach).filter(|p| !*p.1) {
        labelled.push(i);
        values.extend(&proportions);
    }
    let values = DMatrix::from_row_slice(labelled.len(), c, &values);
    let system = System::new(graph, &solvable, &labelled, &values);
    let x = match system.solve_direct() {
        Some(x) if system.acceptable(&x) => x,
        _ => {
            return propagate_labels(graph, missing, known, labels, c, eps, max_iter, &mut |_, _| {})
        }
    };
    let mut probs = Vec::with_capacity(missing.len() * c);
    let mut next = 0;
    for &r in &reach {
        let start = probs.len();
        if r {
            probs.extend(x.row(next).iter().map(|v| v.max(0.0)));
            next += 1;
        } else {
            probs.extend(&proportions);
        }
        normalize(&mut probs[start..], c);
    }
    let labels = LabelMatrix {
        rows: missing.to_vec(),
        probs: DMatrix::from_row_slice(missing.len(), c, &probs),
        iterations: 0,
        converged: true,
    };
    DiscreteSolve {
        hard: labels.hard_labels(),
        labels,
        fallback_subjects: reach.iter().filter(|&&r| !r).count(),
    }
}

/// With every observed label in one class the fixed point puts all mass on
/// that class.
fn single_class(missing: &[usize], proportions: &[f64], reach: &[bool]) -> Option<DiscreteSolve> {
    proportions.iter().position(|&p| p == 1.0)?;
    let m = missing.len();
    let labels = LabelMatrix {
        rows: missing.to_vec(),
        probs: DMatrix::from_fn(m, proportions.len(), |_, k| proportions[k]),
        iterations: 0,
        converged: true,
    };
    Some(DiscreteSolve {
        hard: labels.hard_labels(),
        labels,
        fallback_subjects: reach.iter().filter(|&&r| !r).count(),
    })
}

fn normalize(row: &mut [f64], c: usize) {
    let s: f64 = row.iter().sum();
    if s > 0.0 && s.is_finite() {
        row.iter_mut().for_each(|v| *v /= s);
    } else {
        row.iter_mut().for_each(|v| *v = 1.0 / c as f64);
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}
