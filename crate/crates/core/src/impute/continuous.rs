//! Harmonic (closed-form) imputation of a continuous column.
//!
//! For the missing set `S0` with observed set `S1` the imputations solve
//! `(I - W[S0,S0]) x = W[S0,S1] x_obs`. The system is factorized, never
//! inverted.

use nalgebra::DMatrix;

use super::{column_check, reachable};
use crate::data::{MissingDataset, SolverStatus};
use crate::error::Result;
use crate::kernel::WeightGraph;

/// Relative residual accepted from the direct solve.
const DIRECT_TOLERANCE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 2;
const FALLBACK_EPS: f64 = 1e-12;
const FALLBACK_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSolve {
    /// Subjects that were imputed, ascending.
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    pub status: SolverStatus,
    /// Euclidean norm of the final linear-system residual.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Subjects with no path to an observed value, filled with the mean.
    pub fallback_subjects: usize,
}

/// Closed-form imputation of continuous column `j`.
pub fn impute_continuous_column(
    graph: &WeightGraph,
    ds: &MissingDataset,
    j: usize,
) -> Result<ContinuousSolve> {
    let (missing, known, values) = column_check(ds, j, false)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(harmonic_solve(graph, &missing, &known, &values, mean))
}

/// Fixed-point iteration `x <- W[S0,S0] x + C` started from zero.
pub fn impute_continuous_iterative(
    graph: &WeightGraph,
    ds: &MissingDataset,
    j: usize,
    eps: f64,
    max_iter: usize,
) -> Result<ContinuousSolve> {
    let (missing, known, values) = column_check(ds, j, false)?;
    let system = System::new(graph, &missing, &known, &column(&values));
    let init = DMatrix::zeros(missing.len(), 1);
    let (x, iterations, converged) = system.fixed_point(init, eps, max_iter);
    let residual = system.residual(&x);
    Ok(ContinuousSolve {
        rows: missing,
        values: x.as_slice().to_vec(),
        status: SolverStatus::IterativeFallback,
        residual,
        iterations,
        converged,
        fallback_subjects: 0,
    })
}

/// Dense restriction of `I - W` to a solvable set `S`, with the labelled
/// contribution folded into one right-hand side per value column.
pub(crate) struct System {
    /// Similarity form of the rows, when they admit one.
    similarity: Option<Similarity>,
    /// `W[S,S]`.
    wss: DMatrix<f64>,
    /// `W[S,L] V`.
    rhs: DMatrix<f64>,
    /// Row sums of `W[S,L]`.
    boundary: Vec<f64>,
}

impl System {
    /// `values` has one row per labelled subject.
    pub(crate) fn new(
        graph: &WeightGraph,
        rows: &[usize],
        labelled: &[usize],
        values: &DMatrix<f64>,
    ) -> Self {
        let m = rows.len();
        let wss = DMatrix::from_fn(m, m, |r, c| graph.w(rows[r], rows[c]));
        let wsl = DMatrix::from_fn(m, labelled.len(), |r, c| graph.w(rows[r], labelled[c]));
        let boundary = wsl.row_iter().map(|row| row.sum()).collect();
        let fallbacks = graph.row_fallbacks();
        let similarity = (graph.is_symmetric()
            && !rows.iter().any(|i| fallbacks.binary_search(i).is_ok()))
        .then(|| Similarity::new(graph, rows, labelled, values));
        Self {
            similarity,
            wss,
            rhs: wsl * values,
            boundary,
        }
    }

    fn m(&self) -> usize {
        self.wss.nrows()
    }

    /// `(I - W[S,S]) x`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        out.gemm(-1.0, &self.wss, x, 1.0);
        out
    }

    pub(crate) fn residual(&self, x: &DMatrix<f64>) -> f64 {
        (&self.rhs - self.apply(x)).norm()
    }

    /// Fixed-point iteration from `x`, stopping on a sup-norm change below
    /// `eps`.
    pub(crate) fn fixed_point(
        &self,
        mut x: DMatrix<f64>,
        eps: f64,
        max_iter: usize,
    ) -> (DMatrix<f64>, usize, bool) {
        if self.m() == 0 {
            return (x, 0, true);
        }
        let mut next = x.clone();
        for it in 1..=max_iter {
            next.copy_from(&self.rhs);
            next.gemm(1.0, &self.wss, &x, 1.0);
            let change = (&next - &x).amax();
            std::mem::swap(&mut x, &mut next);
            if change < eps {
                return (x, it, true);
            }
        }
        (x, max_iter, false)
    }

    /// Dense solve: elimination with summed pivots, then LU with partial
    /// pivoting if that is rejected.
    pub(crate) fn solve_direct(&self) -> Option<DMatrix<f64>> {
        let m = self.m();
        if m == 0 {
            return Some(DMatrix::zeros(0, self.rhs.ncols()));
        }
        let eliminated = match &self.similarity {
            Some(sim) => sim.eliminate(),
            None => self.eliminate(),
        };
        if let Some(x) = eliminated {
            if self.acceptable(&x) {
                return Some(x);
            }
        }
        let lu = (DMatrix::identity(m, m) - &self.wss).lu();
        let mut x = lu.solve(&self.rhs)?;
        for _ in 0..REFINEMENT_STEPS {
            if self.acceptable(&x) {
                break;
            }
            x += lu.solve(&(&self.rhs - self.apply(&x)))?;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Gaussian elimination in natural order where each pivot is the sum of
    /// the remaining outgoing weights, never a difference. A set tied to the
    /// labelled subjects by tiny weights stays accurate this way, while the
    /// rows of `I - W[S,S]` cancel to rounding noise.
    fn eliminate(&self) -> Option<DMatrix<f64>> {
        let m = self.m();
        let r = self.rhs.ncols();
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            for k in (0..m).filter(|&k| k != i) {
                a[i * m + k] = self.wss[(i, k)];
            }
        }
        let mut g = self.boundary.clone();
        let mut b: Vec<f64> = (0..m).flat_map(|i| (0..r).map(move |c| (i, c))).map(|(i, c)| self.rhs[(i, c)]).collect();
        let mut pivots = vec![0.0; m];
        for s in 0..m {
            let (head, tail) = a.split_at_mut((s + 1) * m);
            let row_s = &head[s * m..];
            let d = g[s] + row_s[s + 1..].iter().sum::<f64>();
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            pivots[s] = d;
            let (b_head, b_tail) = b.split_at_mut((s + 1) * r);
            let b_s = &b_head[s * r..];
            for (t, row_i) in tail.chunks_exact_mut(m).enumerate() {
                let f = row_i[s] / d;
                if f == 0.0 {
                    continue;
                }
                for (v, w) in row_i[s + 1..].iter_mut().zip(&row_s[s + 1..]) {
                    *v += f * w;
                }
                g[s + 1 + t] += f * g[s];
                for (v, w) in b_tail[t * r..(t + 1) * r].iter_mut().zip(b_s) {
                    *v += f * w;
                }
            }
        }
        back_substitute(&a, &b, &pivots, m, r)
    }

    pub(crate) fn acceptable(&self, x: &DMatrix<f64>) -> bool {
        let scale = (self.rhs.norm() + x.norm()).max(f64::MIN_POSITIVE);
        self.residual(x) <= DIRECT_TOLERANCE * scale
    }
}

/// `(D - A[S,S]) x = A[S,L] V` with `D` the full similarity row sums, the
/// same system as `(I - W[S,S]) x = W[S,L] V` scaled by `D`. Only the upper
/// triangle of the symmetric coupling is kept.
struct Similarity {
    m: usize,
    /// Row-major, entries right of the diagonal.
    upper: Vec<f64>,
    boundary: Vec<f64>,
    rhs: Vec<f64>,
    r: usize,
}

impl Similarity {
    fn new(graph: &WeightGraph, rows: &[usize], labelled: &[usize], values: &DMatrix<f64>) -> Self {
        let m = rows.len();
        let r = values.ncols();
        let mut upper = vec![0.0; m * m];
        for (i, &si) in rows.iter().enumerate() {
            let a_row = graph.a_row(si);
            for (k, &sk) in rows.iter().enumerate().skip(i + 1) {
                upper[i * m + k] = a_row[sk];
            }
        }
        let asl = DMatrix::from_fn(m, labelled.len(), |i, l| graph.a(rows[i], labelled[l]));
        let boundary = asl.row_iter().map(|row| row.sum()).collect();
        let b = asl * values;
        let rhs = (0..m).flat_map(|i| (0..r).map(move |c| (i, c))).map(|(i, c)| b[(i, c)]).collect();
        Self {
            m,
            upper,
            boundary,
            rhs,
            r,
        }
    }

    /// Symmetric counterpart of [`System::eliminate`].
    fn eliminate(&self) -> Option<DMatrix<f64>> {
        let (m, r) = (self.m, self.r);
        let mut a = self.upper.clone();
        let mut g = self.boundary.clone();
        let mut b = self.rhs.clone();
        let mut pivots = vec![0.0; m];
        for s in 0..m {
            let (head, tail) = a.split_at_mut((s + 1) * m);
            let row_s = &head[s * m..];
            let d = g[s] + row_s[s + 1..].iter().sum::<f64>();
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            pivots[s] = d;
            let (b_head, b_tail) = b.split_at_mut((s + 1) * r);
            let b_s = &b_head[s * r..];
            for (t, row_i) in tail.chunks_exact_mut(m).enumerate() {
                let i = s + 1 + t;
                let f = row_s[i] / d;
                if f == 0.0 {
                    continue;
                }
                for (v, w) in row_i[i + 1..].iter_mut().zip(&row_s[i + 1..]) {
                    *v += f * w;
                }
                g[i] += f * g[s];
                for (v, w) in b_tail[t * r..(t + 1) * r].iter_mut().zip(b_s) {
                    *v += f * w;
                }
            }
        }
        back_substitute(&a, &b, &pivots, m, r)
    }
}

/// Solves the unit-free triangular system left by elimination: row `s`
/// reads `pivot_s x_s - sum_{k>s} a_sk x_k = b_s`.
fn back_substitute(a: &[f64], b: &[f64], pivots: &[f64], m: usize, r: usize) -> Option<DMatrix<f64>> {
    let mut x = DMatrix::zeros(m, r);
    for s in (0..m).rev() {
        let row_s = &a[s * m..(s + 1) * m];
        for c in 0..r {
            let mut acc = b[s * r + c];
            for k in s + 1..m {
                acc += row_s[k] * x[(k, c)];
            }
            x[(s, c)] = acc / pivots[s];
        }
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}


/// Imputes `missing` from the labelled set `known`. Subjects without any
/// weighted path to `known` receive `fallback`.
pub(crate) fn harmonic_solve(
    graph: &WeightGraph,
    missing: &[usize],
    known: &[usize],
    values: &[f64],
    fallback: f64,
) -> ContinuousSolve {
    if missing.is_empty() {
        return ContinuousSolve {
            rows: Vec::new(),
            values: Vec::new(),
            status: SolverStatus::Direct,
            residual: 0.0,
            iterations: 0,
            converged: true,
            fallback_subjects: 0,
        };
    }
    let reach = reachable(graph, missing, known);
    let mut solvable = Vec::with_capacity(missing.len());
    let mut isolated = Vec::new();
    for (&i, &r) in missing.iter().zip(&reach) {
        if r { solvable.push(i) } else { isolated.push(i) }
    }

    // Isolated subjects act as extra labelled nodes carrying the fallback.
    let mut labelled = known.to_vec();
    let mut label_values = values.to_vec();
    labelled.extend(&isolated);
    label_values.extend(std::iter::repeat_n(fallback, isolated.len()));

    let system = System::new(graph, &solvable, &labelled, &column(&label_values));
    let (x, status, iterations, converged) = match system.solve_direct() {
        Some(x) if system.acceptable(&x) => (x, SolverStatus::Direct, 0, true),
        _ => {
            let init = DMatrix::from_element(solvable.len(), 1, fallback);
            let (x, it, conv) = system.fixed_point(init, FALLBACK_EPS, FALLBACK_MAX_ITER);
            (x, SolverStatus::IterativeFallback, it, conv)
        }
    };
    let residual = system.residual(&x);

    let mut out: Vec<(usize, f64)> = solvable.into_iter().zip(x.iter().copied()).collect();
    out.extend(isolated.iter().map(|&i| (i, fallback)));
    out.sort_by_key(|&(i, _)| i);
    ContinuousSolve {
        rows: out.iter().map(|&(i, _)| i).collect(),
        values: out.iter().map(|&(_, v)| v).collect(),
        status: if isolated.is_empty() {
            status
        } else {
            SolverStatus::MeanFallback
        },
        residual,
        iterations,
        converged,
        fallback_subjects: isolated.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSchema;
    use crate::kernel::{build_graph, GraphOptions, ScaleParams};

    /// Graph whose normalized weights are given explicitly.
    fn graph_from_weights(w: &[&[f64]]) -> WeightGraph {
        crate::impute::tests::graph_from_rows(w)
    }

    fn one_col(values: &[Option<f64>]) -> MissingDataset {
        MissingDataset::from_rows(
            vec![Some(0.0); values.len()],
            &values.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            vec![ColumnSchema::continuous("x")],
        )
        .unwrap()
    }

    #[test]
    fn single_missing_subject_averages_neighbors() {
        let g = graph_from_weights(&[&[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5], &[0.5, 0.5, 0.0]]);
        let ds = one_col(&[None, Some(2.0), Some(4.0)]);
        let s = impute_continuous_column(&g, &ds, 0).unwrap();
        assert_eq!(s.rows, vec![0]);
        assert!((s.values[0] - 3.0).abs() < 1e-14);
        assert_eq!(s.status, SolverStatus::Direct);
    }

    #[test]
    fn coupled_pair_matches_hand_solution() {
        // W[S0,S0] = [[0,.5],[.5,0]] and C = [1, 2]: subject 0 puts 0.5 on
        // observed subject 2 (value 2), subject 1 puts 0.5 on subject 3
        // (value 4).
        let g = graph_from_weights(&[
            &[0.0, 0.5, 0.5, 0.0],
            &[0.5, 0.0, 0.0, 0.5],
            &[0.5, 0.0, 0.0, 0.5],
            &[0.0, 0.5, 0.5, 0.0],
        ]);
        let ds = one_col(&[None, None, Some(2.0), Some(4.0)]);
        let direct = impute_continuous_column(&g, &ds, 0).unwrap();
        assert!((direct.values[0] - 8.0 / 3.0).abs() < 1e-14);
        assert!((direct.values[1] - 10.0 / 3.0).abs() < 1e-14);
        let iter = impute_continuous_iterative(&g, &ds, 0, 1e-13, 10_000).unwrap();
        assert!(iter.converged);
        for (a, b) in direct.values.iter().zip(&iter.values) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn uncoupled_missing_subjects_take_one_iteration() {
        let g = graph_from_weights(&[
            &[0.0, 0.0, 0.25, 0.75],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
        ]);
        let ds = one_col(&[None, None, Some(2.0), Some(6.0)]);
        let s = impute_continuous_iterative(&g, &ds, 0, 1e-12, 100).unwrap();
        // The second sweep confirms the fixed point, so two passes total.
        assert!(s.iterations <= 2);
        assert_eq!(s.values, vec![0.25 * 2.0 + 0.75 * 6.0, 2.0]);
    }

    #[test]
    fn constant_column_propagates_constant() {
        let ds = MissingDataset::from_rows(
            vec![Some(0.0), Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
            &[vec![Some(7.5)], vec![None], vec![Some(7.5)], vec![None], vec![Some(7.5)]],
            vec![ColumnSchema::continuous("x")],
        )
        .unwrap();
        let g = build_graph(&ds, &ScaleParams::shared(0.3).unwrap(), GraphOptions::default()).unwrap();
        let s = impute_continuous_column(&g, &ds, 0).unwrap();
        for v in s.values {
            assert!((v - 7.5).abs() < 1e-12);
        }
        let it = impute_continuous_iterative(&g, &ds, 0, 1e-14, 1000).unwrap();
        for v in it.values {
            assert!((v - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_component_gets_mean() {
        // Subjects 0 and 1 only see each other.
        let g = graph_from_weights(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let ds = one_col(&[None, None, Some(1.0), Some(5.0)]);
        let s = impute_continuous_column(&g, &ds, 0).unwrap();
        assert_eq!(s.status, SolverStatus::MeanFallback);
        assert_eq!(s.fallback_subjects, 2);
        assert_eq!(s.values, vec![3.0, 3.0]);
    }

    #[test]
    fn empty_observed_set_is_an_error() {
        let g = graph_from_weights(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let ds = MissingDataset::from_rows(
            vec![Some(0.0), Some(0.0)],
            &[vec![None, Some(1.0)], vec![None, Some(2.0)]],
            vec![ColumnSchema::continuous("a"), ColumnSchema::continuous("b")],
        )
        .unwrap();
        assert!(matches!(
            impute_continuous_column(&g, &ds, 0),
            Err(crate::Error::EmptyObservedSet(0))
        ));
    }

    #[test]
    fn kernel_graph_solve_matches_explicit_inverse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let n = 30;
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|_| {
                let x = (rng.random::<f64>() < 0.6).then(|| rng.random_range(-2.0..2.0));
                vec![x, Some(rng.random_range(-1.0..1.0))]
            })
            .collect();
        let ds = MissingDataset::from_rows(
            (0..n).map(|_| Some(rng.random_range(-1.0..1.0))).collect(),
            &rows,
            vec![ColumnSchema::continuous("x"), ColumnSchema::continuous("z")],
        )
        .unwrap();
        let g = build_graph(&ds, &ScaleParams::shared(1.5).unwrap(), GraphOptions::excluding(0)).unwrap();
        let s = impute_continuous_column(&g, &ds, 0).unwrap();
        assert_eq!(s.status, SolverStatus::Direct);

        let (missing, known, values) = column_check(&ds, 0, false).unwrap();
        let m = missing.len();
        let i_minus_w = DMatrix::from_fn(m, m, |r, c| {
            let w = g.w(missing[r], missing[c]);
            if r == c { 1.0 - w } else { -w }
        });
        let c = DMatrix::from_fn(m, 1, |r, _| {
            known.iter().zip(&values).map(|(&k, &v)| g.w(missing[r], k) * v).sum::<f64>()
        });
        let expected = i_minus_w.try_inverse().unwrap() * c;
        for (a, b) in s.values.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10);
        }

        let vals = DMatrix::from_fn(known.len(), 1, |r, _| values[r]);
        let mut system = System::new(&g, &missing, &known, &vals);
        let sym = system.similarity.take().expect("kernel graph").eliminate().unwrap();
        let general = system.eliminate().unwrap();
        for (a, b) in sym.iter().zip(general.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weakly_tied_cluster_keeps_boundary_value() {
        // Subjects 0 and 1 reach the labelled subjects only through weights
        // of 1e-20, far below the rounding of 1 - w.
        let t = 1e-20;
        let g = graph_from_weights(&[
            &[0.0, 1.0 - t, t, 0.0],
            &[1.0 - t, 0.0, 0.0, t],
            &[0.5, 0.0, 0.0, 0.5],
            &[0.0, 0.5, 0.5, 0.0],
        ]);
        let ds = one_col(&[None, None, Some(2.0), Some(4.0)]);
        let s = impute_continuous_column(&g, &ds, 0).unwrap();
        assert_eq!(s.status, SolverStatus::Direct);
        // By symmetry the exact values are 3 -/+ a term of order 1e-20.
        for v in &s.values {
            assert!((v - 3.0).abs() < 1e-12, "{v}");
        }
    }
}
