//! Reference imputers: column mean/mode and k nearest neighbors.

use crate::data::{ColumnDiagnostics, ImputationResult, MissingDataset, SolverStatus};
use crate::error::{Error, Result};

/// Observed mean of a continuous column or most frequent class of a
/// discrete one, ties to the lowest class index.
fn column_center(ds: &MissingDataset, j: usize) -> Result<f64> {
    let values = ds.observed_values(j);
    if values.is_empty() {
        return Err(Error::EmptyObservedSet(j));
    }
    let col = ds.column(j);
    if !col.is_discrete() {
        return Ok(values.iter().sum::<f64>() / values.len() as f64);
    }
    let mut counts = vec![0usize; col.classes().len()];
    for v in &values {
        let c = col.class_index(*v).ok_or(Error::UndeclaredClass {
            row: 0,
            column: j,
            value: *v,
        })?;
        counts[c] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .fold(0, |b, (c, &n)| if n > counts[b] { c } else { b });
    Ok(col.classes()[best])
}

pub fn baseline_mean(ds: &MissingDataset) -> Result<ImputationResult> {
    let mut result = ImputationResult::skeleton(ds, None);
    for j in 0..ds.p() {
        let center = column_center(ds, j)?;
        let mut imputed = 0;
        for i in 0..ds.n() {
            if !ds.is_observed(i, j) {
                result.x_hat[(i, j)] = center;
                imputed += 1;
            }
        }
        if imputed > 0 {
            result.columns[j] = ColumnDiagnostics {
                status: SolverStatus::Mean,
                imputed,
                ..ColumnDiagnostics::untouched()
            };
        }
    }
    Ok(result)
}

/// Per-column observed mean and standard deviation of continuous columns,
/// used to put distances on a common scale.
fn scales(ds: &MissingDataset) -> Vec<(f64, f64)> {
    (0..ds.p())
        .map(|j| {
            if ds.column(j).is_discrete() {
                return (0.0, 1.0);
            }
            let v = ds.observed_values(j);
            let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64;
            let sd = var.sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Squared distance over the covariates both subjects observe, leaving out
/// `target`, inflated by the share of covariates actually compared.
fn knn_distance(
    ds: &MissingDataset,
    sc: &[(f64, f64)],
    a: usize,
    b: usize,
    target: usize,
) -> Option<f64> {
    let mut acc = 0.0;
    let mut common = 0;
    for k in (0..ds.p()).filter(|&k| k != target) {
        if let (Some(u), Some(v)) = (ds.value(a, k), ds.value(b, k)) {
            common += 1;
            acc += if ds.column(k).is_discrete() {
                if u == v { 0.0 } else { 1.0 }
            } else {
                let d = (u - v) / sc[k].1;
                d * d
            };
        }
    }
    (common > 0).then(|| (ds.p() - 1) as f64 / common as f64 * acc)
}

/// Average (continuous) or majority vote (discrete) over the `k` nearest
/// subjects that observe the target column. Covariates only; the response
/// plays no part. Entries without any comparable neighbor get the column
/// mean or mode.
pub fn baseline_knn(ds: &MissingDataset, k: usize) -> Result<ImputationResult> {
    if k == 0 {
        return Err(Error::InvalidScale("k must be at least 1".into()));
    }
    let mut result = ImputationResult::skeleton(ds, None);
    let sc = scales(ds);
    for j in 0..ds.p() {
        let donors: Vec<usize> = (0..ds.n()).filter(|&i| ds.is_observed(i, j)).collect();
        let center = column_center(ds, j)?;
        let col = ds.column(j);
        let mut diag = ColumnDiagnostics::untouched();
        for i in (0..ds.n()).filter(|&i| !ds.is_observed(i, j)) {
            let mut near: Vec<(f64, usize)> = donors
                .iter()
                .filter_map(|&d| knn_distance(ds, &sc, i, d, j).map(|dist| (dist, d)))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k);
            let value = if near.is_empty() {
                diag.fallback_subjects += 1;
                center
            } else if col.is_discrete() {
                let mut votes = vec![0usize; col.classes().len()];
                for &(_, d) in &near {
                    let v = ds.value(d, j).expect("donor observes column");
                    votes[col.class_index(v).expect("declared class")] += 1;
                }
                let best = votes
                    .iter()
                    .enumerate()
                    .fold(0, |b, (c, &n)| if n > votes[b] { c } else { b });
                col.classes()[best]
            } else {
                near.iter()
                    .map(|&(_, d)| ds.value(d, j).expect("donor observes column"))
                    .sum::<f64>()
                    / near.len() as f64
            };
            result.x_hat[(i, j)] = value;
            diag.imputed += 1;
        }
        if diag.imputed > 0 {
            diag.status = SolverStatus::Knn;
            diag.fallback_applied = diag.fallback_subjects > 0;
            result.columns[j] = diag;
        }
    }
    Ok(result)
}
