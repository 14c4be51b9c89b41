//! Semi-supervised imputation of missing covariates.
//!
//! Subjects are linked by a Gaussian similarity over their responses and
//! shared observed covariates. Missing continuous entries are the harmonic
//! extension of the observed ones over this graph; discrete entries come
//! from label propagation.

pub mod bench;
pub mod data;
pub mod error;
pub mod impute;
pub mod io;
pub mod kernel;
pub mod regression;
pub mod simulation;
pub mod tuning;

pub use data::{
    missing_rate, validate, validate_with_order, ColumnDiagnostics, ColumnKind, ColumnSchema,
    ImputationResult, MissingDataset, PatternIndex, SolverStatus, SubjectOrder,
};
pub use error::{Error, ErrorClass, Result};
pub use impute::{impute_all, impute_sssi, DiscreteSolver, ImputeOptions, SweepRefresh};
pub use io::{load_csv, load_table, save_result, CsvSpec, Table, TableSchema};
pub use kernel::{build_graph, GraphOptions, ScaleParams, WeightGraph};
pub use regression::{fit_ols, loo_predictions, predict, OlsFit};
pub use tuning::{q_criterion, tune_cv, tune_interchangeable, TauGrid, TuneOptions, TuneReport};
pub use simulation::{draw, Mechanism, PatternFamily, SimDraw, SimScenario};
pub use bench::{run_bench, BenchTable, Method, RepMetrics};
