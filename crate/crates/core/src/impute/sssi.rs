//! Sequential re-imputation.
//!
//! After a first full pass every column is imputed again in order, with the
//! graph built from the completed matrix so that imputed entries enter the
//! distances. Propagation labels stay the truly observed values.

use nalgebra::DMatrix;

use super::{fill_column, impute_with_graph, ImputeOptions, SweepRefresh};
use crate::data::{validate, ImputationResult, MissingDataset};
use crate::error::{Error, Result};
use crate::kernel::{build_graph, ScaleParams};

pub fn impute_sssi(
    dataset: &MissingDataset,
    params: &ScaleParams,
    sweeps: usize,
    options: &ImputeOptions,
) -> Result<ImputationResult> {
    if sweeps == 0 {
        return Err(Error::InvalidScale("sequential imputation needs at least one sweep".into()));
    }
    let index = validate(dataset)?;
    let mut result = ImputationResult::skeleton(dataset, Some(*params));
    if !index.has_missing() {
        result.sweeps = sweeps;
        return Ok(result);
    }
    let graph = build_graph(dataset, params, options.graph_options(None))?;
    impute_with_graph(dataset, &index, &graph, options, &mut result)?;
    drop(graph);

    let observed: Vec<Vec<f64>> = (0..dataset.p())
        .map(|j| dataset.observed_values(j))
        .collect();
    for _ in 0..sweeps {
        let snapshot: Option<DMatrix<f64>> =
            (options.refresh == SweepRefresh::PerSweep).then(|| result.x_hat.clone());
        for j in 0..dataset.p() {
            if index.s0[j].is_empty() {
                continue;
            }
            let current = snapshot.as_ref().unwrap_or(&result.x_hat);
            let completed = dataset.completed_with(current)?;
            let graph = build_graph(&completed, params, options.graph_options(Some(j)))?;
            let fill = fill_column(
                &graph,
                dataset.column(j),
                &index.s0[j],
                &index.s1[j],
                &observed[j],
                options,
            )
            .map_err(|e| e.in_column(j))?;
            fill.write_into(&mut result, j);
        }
    }
    result.sweeps = sweeps;
    Ok(result)
}
