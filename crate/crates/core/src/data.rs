//! Tabular types shared by every stage: the masked covariate matrix, its
//! column schema, the per-subject observation patterns and the completed
//! output of an imputation run.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ScaleParams;

/// Whether a covariate is measured on a continuous scale or takes one of a
/// finite set of class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Class labels are numeric so that the completed matrix can enter a
    /// regression design unchanged.
    Discrete { classes: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn discrete(name: impl Into<String>, classes: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Discrete { classes },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ColumnKind::Discrete { .. })
    }

    pub fn classes(&self) -> &[f64] {
        match &self.kind {
            ColumnKind::Continuous => &[],
            ColumnKind::Discrete { classes } => classes,
        }
    }

    /// Position of `value` in the declared class list.
    pub fn class_index(&self, value: f64) -> Option<usize> {
        self.classes().iter().position(|&c| c == value)
    }

    pub(crate) fn kind_name(&self) -> &'static str {
        match self.kind {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Discrete { .. } => "discrete",
        }
    }
}

/// Response vector plus an `n x p` covariate matrix with an observation mask.
///
/// Masked cells hold NaN; nothing in the crate reads them. Equality
/// compares masks, schemas and the observed values only.
#[derive(Debug, Clone)]
pub struct MissingDataset {
    y: Vec<f64>,
    y_observed: Vec<bool>,
    x: DMatrix<f64>,
    observed: DMatrix<bool>,
    schema: Vec<ColumnSchema>,
}

impl PartialEq for MissingDataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.y_observed == other.y_observed
            && self.observed == other.observed
            && (0..self.n()).all(|i| self.response(i) == other.response(i))
            && (0..self.n()).all(|i| (0..self.p()).all(|j| self.value(i, j) == other.value(i, j)))
    }
}

impl MissingDataset {
    /// Builds a dataset with a fully observed response.
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        observed: DMatrix<bool>,
        schema: Vec<ColumnSchema>,
    ) -> Result<Self> {
        let n = y.len();
        Self::with_response_mask(y, vec![true; n], x, observed, schema)
    }

    pub fn with_response_mask(
        y: Vec<f64>,
        y_observed: Vec<bool>,
        mut x: DMatrix<f64>,
        observed: DMatrix<bool>,
        schema: Vec<ColumnSchema>,
    ) -> Result<Self> {
        let n = y.len();
        if y_observed.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "response mask has {} entries for {} responses",
                y_observed.len(),
                n
            )));
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "covariate matrix has {} rows for {} responses",
                x.nrows(),
                n
            )));
        }
        if observed.shape() != x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "mask shape {:?} differs from matrix shape {:?}",
                observed.shape(),
                x.shape()
            )));
        }
        if schema.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "schema has {} columns, matrix has {}",
                schema.len(),
                x.ncols()
            )));
        }
        check_schema(&schema)?;
        for i in 0..n {
            if y_observed[i] && !y[i].is_finite() {
                return Err(Error::NonFiniteValue { row: i, column: usize::MAX });
            }
        }
        let mut y = y;
        for (v, &o) in y.iter_mut().zip(&y_observed) {
            if !o {
                *v = f64::NAN;
            }
        }
        for j in 0..x.ncols() {
            for i in 0..n {
                if observed[(i, j)] {
                    if !x[(i, j)].is_finite() {
                        return Err(Error::NonFiniteValue { row: i, column: j });
                    }
                } else {
                    x[(i, j)] = f64::NAN;
                }
            }
        }
        Ok(Self {
            y,
            y_observed,
            x,
            observed,
            schema,
        })
    }

    /// Row-oriented constructor; `None` marks a missing cell.
    pub fn from_rows(
        y: Vec<Option<f64>>,
        rows: &[Vec<Option<f64>>],
        schema: Vec<ColumnSchema>,
    ) -> Result<Self> {
        let n = rows.len();
        let p = schema.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} responses for {} rows",
                y.len(),
                n
            )));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} cells, schema has {p}",
                r.len()
            )));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j].unwrap_or(f64::NAN));
        let observed = DMatrix::from_fn(n, p, |i, j| rows[i][j].is_some());
        let y_observed = y.iter().map(Option::is_some).collect();
        let y = y.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self::with_response_mask(y, y_observed, x, observed, schema)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn column(&self, j: usize) -> &ColumnSchema {
        &self.schema[j]
    }

    pub fn response(&self, i: usize) -> Option<f64> {
        self.y_observed[i].then(|| self.y[i])
    }

    /// Raw response slice; entries with a false flag in
    /// [`response_mask`](Self::response_mask) are NaN.
    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn response_mask(&self) -> &[bool] {
        &self.y_observed
    }

    pub fn response_fully_observed(&self) -> bool {
        self.y_observed.iter().all(|&o| o)
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.observed[(i, j)].then(|| self.x[(i, j)])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[(i, j)]
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.observed
    }

    /// Covariate matrix with NaN in masked cells.
    pub fn raw_matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn observed_values(&self, j: usize) -> Vec<f64> {
        (0..self.n()).filter_map(|i| self.value(i, j)).collect()
    }

    pub fn count_missing(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    /// Subjects listed in `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let p = self.p();
        Self {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            y_observed: rows.iter().map(|&i| self.y_observed[i]).collect(),
            x: DMatrix::from_fn(rows.len(), p, |r, j| self.x[(rows[r], j)]),
            observed: DMatrix::from_fn(rows.len(), p, |r, j| self.observed[(rows[r], j)]),
            schema: self.schema.clone(),
        }
    }

    /// Appends the subjects of `other` below those of `self`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if self.schema != other.schema {
            return Err(Error::SchemaMismatch(
                "cannot stack datasets with different schemas".into(),
            ));
        }
        let (n1, n2, p) = (self.n(), other.n(), self.p());
        let pick = |i: usize, j: usize| {
            if i < n1 {
                (self.x[(i, j)], self.observed[(i, j)])
            } else {
                (other.x[(i - n1, j)], other.observed[(i - n1, j)])
            }
        };
        Ok(Self {
            y: self.y.iter().chain(&other.y).copied().collect(),
            y_observed: self
                .y_observed
                .iter()
                .chain(&other.y_observed)
                .copied()
                .collect(),
            x: DMatrix::from_fn(n1 + n2, p, |i, j| pick(i, j).0),
            observed: DMatrix::from_fn(n1 + n2, p, |i, j| pick(i, j).1),
            schema: self.schema.clone(),
        })
    }

    /// Same data with every response masked at the given subjects.
    pub fn mask_responses(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in rows {
            out.y_observed[i] = false;
            out.y[i] = f64::NAN;
        }
        out
    }

    /// Same data with column `j` masked for every subject.
    pub fn mask_column(&self, j: usize) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            out.observed[(i, j)] = false;
            out.x[(i, j)] = f64::NAN;
        }
        out
    }

    /// Fully observed dataset carrying `x_hat` as its covariates.
    pub fn completed_with(&self, x_hat: &DMatrix<f64>) -> Result<Self> {
        Self::with_response_mask(
            self.y.clone(),
            self.y_observed.clone(),
            x_hat.clone(),
            DMatrix::from_element(self.n(), self.p(), true),
            self.schema.clone(),
        )
    }
}

fn check_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut names = HashSet::new();
    for col in schema {
        if !names.insert(col.name.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "duplicate column name {:?}",
                col.name
            )));
        }
        if let ColumnKind::Discrete { classes } = &col.kind {
            if classes.len() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "discrete column {:?} needs at least 2 classes",
                    col.name
                )));
            }
            if classes.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSchema(format!(
                    "discrete column {:?} has a non-finite class label",
                    col.name
                )));
            }
            for (a, ca) in classes.iter().enumerate() {
                if classes[a + 1..].contains(ca) {
                    return Err(Error::InvalidSchema(format!(
                        "discrete column {:?} repeats class {ca}",
                        col.name
                    )));
                }
            }
        }
    }
    Ok(())
}

/// How subjects are ordered when computing the pattern overlap exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectOrder {
    #[default]
    AsGiven,
    /// Stable sort by observation pattern before scanning neighbors.
    ByPattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum ValidationWarning {
    /// Column observed for a single subject; imputation copies that value.
    SingleObservation { column: usize },
}

/// Index sets derived from the observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternIndex {
    /// Observed covariates of each subject, ascending.
    pub d_sets: Vec<Vec<usize>>,
    /// Subjects missing each column.
    pub s0: Vec<Vec<usize>>,
    /// Subjects observing each column.
    pub s1: Vec<Vec<usize>>,
    /// One plus the largest overlap between consecutive subjects' patterns.
    pub d0: usize,
    pub warnings: Vec<ValidationWarning>,
}

impl PatternIndex {
    pub fn has_missing(&self) -> bool {
        self.s0.iter().any(|s| !s.is_empty())
    }
}

pub fn validate(dataset: &MissingDataset) -> Result<PatternIndex> {
    validate_with_order(dataset, SubjectOrder::AsGiven)
}

pub fn validate_with_order(dataset: &MissingDataset, order: SubjectOrder) -> Result<PatternIndex> {
    let (n, p) = (dataset.n(), dataset.p());
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    let mut s0 = vec![Vec::new(); p];
    let mut s1 = vec![Vec::new(); p];
    let mut d_sets = vec![Vec::new(); n];
    for j in 0..p {
        let col = dataset.column(j);
        for i in 0..n {
            match dataset.value(i, j) {
                Some(v) => {
                    if col.is_discrete() && col.class_index(v).is_none() {
                        return Err(Error::UndeclaredClass {
                            row: i,
                            column: j,
                            value: v,
                        });
                    }
                    s1[j].push(i);
                }
                None => s0[j].push(i),
            }
        }
    }
    for (i, d) in d_sets.iter_mut().enumerate() {
        d.extend((0..p).filter(|&j| dataset.is_observed(i, j)));
    }
    let mut warnings = Vec::new();
    for (j, obs) in s1.iter().enumerate() {
        match obs.len() {
            0 => return Err(Error::FullyMissingColumn(j)),
            1 => warnings.push(ValidationWarning::SingleObservation { column: j }),
            _ => {}
        }
    }
    let mut sequence: Vec<usize> = (0..n).collect();
    if order == SubjectOrder::ByPattern {
        sequence.sort_by(|&a, &b| d_sets[a].cmp(&d_sets[b]));
    }
    let d0 = 1 + sequence
        .windows(2)
        .map(|w| overlap(&d_sets[w[0]], &d_sets[w[1]]))
        .max()
        .unwrap_or(0);
    Ok(PatternIndex {
        d_sets,
        s0,
        s1,
        d0,
        warnings,
    })
}

/// Size of the intersection of two ascending index lists.
pub(crate) fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Fraction of masked covariate cells.
pub fn missing_rate(dataset: &MissingDataset) -> f64 {
    let cells = dataset.n() * dataset.p();
    if cells == 0 {
        return 0.0;
    }
    dataset.count_missing() as f64 / cells as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Column had nothing to impute.
    NothingMissing,
    /// Dense factorization with an acceptable residual.
    Direct,
    /// Fixed-point iteration took over after a poor direct residual.
    IterativeFallback,
    /// Some subjects had no path to an observed value and got the column mean.
    MeanFallback,
    /// Discrete column filled by label propagation.
    LabelPropagation,
    /// Observed column mean or mode.
    Mean,
    /// Nearest-neighbor average or vote.
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnDiagnostics {
    pub status: SolverStatus,
    pub imputed: usize,
    pub iterations: usize,
    pub converged: bool,
    pub fallback_applied: bool,
    /// Subjects that received a fallback value.
    pub fallback_subjects: usize,
    pub residual: f64,
}

impl ColumnDiagnostics {
    pub fn untouched() -> Self {
        Self {
            status: SolverStatus::NothingMissing,
            imputed: 0,
            iterations: 0,
            converged: true,
            fallback_applied: false,
            fallback_subjects: 0,
            residual: 0.0,
        }
    }
}

/// Final class probabilities of the imputed subjects of a discrete column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    pub rows: Vec<usize>,
    /// One probability vector per entry of `rows`.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub x_hat: DMatrix<f64>,
    pub imputed: DMatrix<bool>,
    pub columns: Vec<ColumnDiagnostics>,
    pub class_probs: Vec<Option<ClassProbabilities>>,
    pub params: Option<ScaleParams>,
    /// Sequential re-imputation sweeps performed after the first pass.
    pub sweeps: usize,
}

impl ImputationResult {
    /// Starts a result that copies the observed entries of `dataset`.
    pub(crate) fn skeleton(dataset: &MissingDataset, params: Option<ScaleParams>) -> Self {
        let p = dataset.p();
        Self {
            x_hat: dataset.raw_matrix().clone(),
            imputed: dataset.mask().map(|o| !o),
            columns: vec![ColumnDiagnostics::untouched(); p],
            class_probs: vec![None; p],
            params,
            sweeps: 0,
        }
    }

    pub fn fallback_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.fallback_applied)
            .map(|(j, _)| j)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize, p: usize) -> MissingDataset {
        let x = DMatrix::from_fn(n, p, |i, j| (i * p + j) as f64);
        MissingDataset::new(
            (0..n).map(|i| i as f64).collect(),
            x,
            DMatrix::from_element(n, p, true),
            (0..p).map(|j| ColumnSchema::continuous(format!("x{j}"))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn fully_observed_two_by_two() {
        let ds = full(2, 2);
        let idx = validate(&ds).unwrap();
        assert!(idx.s0.iter().all(Vec::is_empty));
        assert_eq!(idx.d0, 3);
        assert_eq!(missing_rate(&ds), 0.0);
    }

    #[test]
    fn d0_from_consecutive_overlap() {
        // One-based patterns D_1 = {1,2,10}, D_2 = {1,2,3,10}, D_3 = {4..9}.
        let p = 10;
        let patterns: [&[usize]; 3] = [&[0, 1, 9], &[0, 1, 2, 9], &[3, 4, 5, 6, 7, 8]];
        assert_eq!(overlap(patterns[0], patterns[1]), 3);
        let mask = DMatrix::from_fn(3, p, |i, j| patterns[i].contains(&j));
        let ds = MissingDataset::new(
            vec![0.0, 1.0, 2.0],
            DMatrix::from_element(3, p, 1.0),
            mask,
            (0..p).map(|j| ColumnSchema::continuous(format!("x{j}"))).collect(),
        )
        .unwrap();
        assert_eq!(validate(&ds).unwrap().d0, 4);
    }

    #[test]
    fn d0_matches_candidate_when_valid() {
        let rows = vec![
            vec![Some(1.0), Some(2.0), None],
            vec![Some(1.0), None, Some(3.0)],
            vec![None, Some(2.0), Some(1.0)],
        ];
        let schema = (0..3).map(|j| ColumnSchema::continuous(format!("x{j}"))).collect();
        let ds = MissingDataset::from_rows(vec![Some(0.0); 3], &rows, schema).unwrap();
        let idx = validate(&ds).unwrap();
        assert_eq!(idx.d_sets, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(idx.d0, 2);
        assert_eq!(idx.s0[0], vec![2]);
        assert_eq!(idx.s1[0], vec![0, 1]);
    }

    #[test]
    fn fully_missing_column_is_rejected() {
        let rows = vec![vec![Some(1.0), None], vec![Some(2.0), None]];
        let schema = vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("b")];
        let ds = MissingDataset::from_rows(vec![Some(0.0), Some(1.0)], &rows, schema).unwrap();
        assert!(matches!(validate(&ds), Err(Error::FullyMissingColumn(1))));
    }

    #[test]
    fn undeclared_class_is_rejected() {
        let rows = vec![vec![Some(0.0)], vec![Some(2.0)]];
        let schema = vec![ColumnSchema::discrete("d", vec![0.0, 1.0])];
        let ds = MissingDataset::from_rows(vec![Some(0.0), Some(1.0)], &rows, schema).unwrap();
        assert!(matches!(
            validate(&ds),
            Err(Error::UndeclaredClass { row: 1, column: 0, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = MissingDataset::new(
            vec![0.0; 3],
            DMatrix::zeros(2, 1),
            DMatrix::from_element(2, 1, true),
            vec![ColumnSchema::continuous("a")],
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
        let err = MissingDataset::new(
            vec![0.0; 2],
            DMatrix::zeros(2, 2),
            DMatrix::from_element(2, 1, true),
            vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("b")],
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = MissingDataset::new(
            vec![0.0; 2],
            DMatrix::zeros(2, 2),
            DMatrix::from_element(2, 2, true),
            vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("a")],
        );
        assert!(matches!(err, Err(Error::InvalidSchema(_))));
    }

    #[test]
    fn single_observation_warns() {
        let rows = vec![vec![Some(1.0), Some(1.0)], vec![None, Some(2.0)], vec![None, Some(3.0)]];
        let schema = vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("b")];
        let ds = MissingDataset::from_rows(vec![Some(0.0); 3], &rows, schema).unwrap();
        let idx = validate(&ds).unwrap();
        assert_eq!(
            idx.warnings,
            vec![ValidationWarning::SingleObservation { column: 0 }]
        );
    }

    #[test]
    fn missing_rate_single_masked_column() {
        let ds = full(5, 10).mask_column(3);
        assert!((missing_rate(&ds) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn missing_rate_of_block_pattern_table() {
        // Six source patterns over 13 covariates: credit card (5),
        // e-shopping (2), phone (2), bureau (2), fraud (2).
        let sources = [5usize, 2, 2, 2, 2];
        let patterns: [([bool; 5], usize); 6] = [
            ([true, true, true, true, true], 113),
            ([true, true, true, true, false], 29),
            ([true, true, false, true, true], 231),
            ([true, true, true, false, false], 220),
            ([true, true, false, false, false], 1161),
            ([false, true, false, false, false], 636),
        ];
        let p: usize = sources.iter().sum();
        let mut rows = Vec::new();
        for (avail, count) in patterns {
            let mut row = Vec::with_capacity(p);
            for (s, &width) in sources.iter().enumerate() {
                row.extend(std::iter::repeat_n(avail[s].then_some(1.0), width));
            }
            rows.extend(std::iter::repeat_n(row, count));
        }
        assert_eq!(rows.len(), 2390);
        let schema = (0..p).map(|j| ColumnSchema::continuous(format!("c{j}"))).collect();
        let ds = MissingDataset::from_rows(vec![Some(0.0); rows.len()], &rows, schema).unwrap();
        let rate = missing_rate(&ds);
        assert!((rate - 0.494).abs() < 5e-4, "rate {rate}");
    }

    #[test]
    fn revalidating_completed_data_has_no_missing() {
        let rows = vec![vec![Some(1.0), None], vec![None, Some(2.0)], vec![Some(3.0), Some(4.0)]];
        let schema = vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("b")];
        let ds = MissingDataset::from_rows(vec![Some(0.0); 3], &rows, schema).unwrap();
        let filled = DMatrix::from_row_slice(3, 2, &[1.0, 3.0, 2.0, 2.0, 3.0, 4.0]);
        let done = ds.completed_with(&filled).unwrap();
        let idx = validate(&done).unwrap();
        assert!(!idx.has_missing());
        assert_eq!(validate(&done).unwrap(), idx);
    }

    #[test]
    fn pattern_order_flag_groups_identical_patterns() {
        let rows = vec![
            vec![Some(1.0), Some(1.0), Some(1.0)],
            vec![Some(1.0), None, None],
            vec![Some(1.0), Some(1.0), Some(1.0)],
            vec![None, Some(1.0), None],
        ];
        let schema = (0..3).map(|j| ColumnSchema::continuous(format!("x{j}"))).collect();
        let ds = MissingDataset::from_rows(vec![Some(0.0); 4], &rows, schema).unwrap();
        assert_eq!(validate(&ds).unwrap().d0, 2);
        assert_eq!(validate_with_order(&ds, SubjectOrder::ByPattern).unwrap().d0, 4);
    }

    #[test]
    fn masked_payload_is_never_kept() {
        let x = DMatrix::from_element(2, 1, 7.0);
        let mask = DMatrix::from_row_slice(2, 1, &[true, false]);
        let ds = MissingDataset::new(vec![0.0, 1.0], x, mask, vec![ColumnSchema::continuous("a")])
            .unwrap();
        assert_eq!(ds.value(1, 0), None);
        assert!(ds.raw_matrix()[(1, 0)].is_nan());
    }
}
