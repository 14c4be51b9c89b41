use thiserror::Error;

/// Errors raised by the imputation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("column {0} has no observed entries")]
    FullyMissingColumn(usize),
    #[error("subject {row}, column {column}: value {value} is not a declared class")]
    UndeclaredClass { row: usize, column: usize, value: f64 },
    #[error("subject {row}, column {column}: observed value is not finite")]
    NonFiniteValue { row: usize, column: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("dataset needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("column {0} has no observed subjects to propagate from")]
    EmptyObservedSet(usize),
    #[error("column {column} is {found}, expected {expected}")]
    WrongColumnKind {
        column: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("every row of the weight matrix underflowed; the scale parameters are too large for the data")]
    AllRowsDegenerate,
    #[error("invalid scale parameters: {0}")]
    InvalidScale(String),
    #[error("no column has missing entries, so the interchange criterion is undefined")]
    NothingToInterchange,
    #[error("invalid tuning grid: {0}")]
    InvalidGrid(String),
    #[error("every grid point failed to evaluate")]
    AllGridPointsFailed,
    #[error("response must be fully observed for this operation")]
    ResponseNotObserved,
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("subject {0} has leverage 1; leave-one-out prediction is undefined")]
    LeverageOne(usize),
    #[error("covariance matrix is not positive definite")]
    NonPositiveDefiniteCovariance,
    #[error("could not calibrate the missingness intercept to rate {target}")]
    CalibrationFailed { target: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line}, column {column}: cannot read {token:?}")]
    Parse {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn in_column(self, column: usize) -> Self {
        match self {
            e @ Error::Column { .. } => e,
            other => Error::Column {
                column,
                source: Box::new(other),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Column { source, .. } => source.class(),
            Error::InvalidGrid(_) | Error::InvalidScale(_) | Error::InvalidScenario(_) => {
                ErrorClass::Usage
            }
            Error::AllRowsDegenerate
            | Error::NothingToInterchange
            | Error::AllGridPointsFailed
            | Error::SingularDesign
            | Error::LeverageOne(_)
            | Error::NonPositiveDefiniteCovariance
            | Error::CalibrationFailed { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::FullyMissingColumn(_) => "fully_missing_column",
            Error::UndeclaredClass { .. } => "undeclared_class",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::InvalidSchema(_) => "invalid_schema",
            Error::TooFewSubjects(_) => "too_few_subjects",
            Error::EmptyObservedSet(_) => "empty_observed_set",
            Error::WrongColumnKind { .. } => "wrong_column_kind",
            Error::AllRowsDegenerate => "all_rows_degenerate",
            Error::InvalidScale(_) => "invalid_scale",
            Error::NothingToInterchange => "nothing_to_interchange",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::AllGridPointsFailed => "all_grid_points_failed",
            Error::ResponseNotObserved => "response_not_observed",
            Error::SingularDesign => "singular_design",
            Error::LeverageOne(_) => "leverage_one",
            Error::NonPositiveDefiniteCovariance => "non_positive_definite_covariance",
            Error::CalibrationFailed { .. } => "calibration_failed",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Column { source, .. } => source.kind(),
            Error::Parse { .. } => "parse_error",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
            Error::Json(_) => "json_error",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
