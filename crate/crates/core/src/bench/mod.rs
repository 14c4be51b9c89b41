//! Replicated comparisons of imputation methods on simulated data.
//!
//! Each replication draws a dataset, imputes the training part, fits least
//! squares on it and predicts the test responses. Test covariates are
//! imputed with the test responses hidden and, for the graph methods, with
//! the scale chosen on the training part.

mod baselines;
mod metrics;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{baseline_knn, baseline_mean};
pub use metrics::{estimation_accuracy, imputation_accuracy, prediction_accuracy, RepMetrics};

use crate::data::{validate, ImputationResult, MissingDataset};
use crate::error::{Error, Result};
use crate::impute::{impute_all, impute_sssi};
use crate::kernel::ScaleParams;
use crate::regression::{fit_ols, predict_rows, with_intercept};
use crate::simulation::{draw, SimDraw, SimScenario};
use crate::tuning::{tune_cv, tune_interchangeable, TauGrid, TuneOptions};

/// How the graph methods pick their scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tuning {
    Interchangeable,
    Cv,
    Fixed(f64),
}

/// Imputation method under comparison.
///
/// Text forms: `mean`, `knn:K`, `ssi1` (interchange tuning), `ssi2`
/// (cross-validation), `ssi:TAU` (fixed), and `sssi1:M`, `sssi2:M`,
/// `sssi:TAU:M` for the sequential variant with `M` sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Mean,
    Knn { k: usize },
    Ssi { tuning: Tuning },
    Sssi { tuning: Tuning, sweeps: usize },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mean => write!(f, "mean"),
            Method::Knn { k } => write!(f, "knn:{k}"),
            Method::Ssi { tuning } => match tuning {
                Tuning::Interchangeable => write!(f, "ssi1"),
                Tuning::Cv => write!(f, "ssi2"),
                Tuning::Fixed(t) => write!(f, "ssi:{t}"),
            },
            Method::Sssi { tuning, sweeps } => match tuning {
                Tuning::Interchangeable => write!(f, "sssi1:{sweeps}"),
                Tuning::Cv => write!(f, "sssi2:{sweeps}"),
                Tuning::Fixed(t) => write!(f, "sssi:{t}:{sweeps}"),
            },
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidScenario(format!("unknown method {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let count = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let method = match parts.as_slice() {
            ["mean"] => Method::Mean,
            ["knn", k] => Method::Knn { k: count(k)? },
            ["ssi1"] => Method::Ssi {
                tuning: Tuning::Interchangeable,
            },
            ["ssi2"] => Method::Ssi { tuning: Tuning::Cv },
            ["ssi", t] => Method::Ssi {
                tuning: Tuning::Fixed(num(t)?),
            },
            ["sssi1", m] => Method::Sssi {
                tuning: Tuning::Interchangeable,
                sweeps: count(m)?,
            },
            ["sssi2", m] => Method::Sssi {
                tuning: Tuning::Cv,
                sweeps: count(m)?,
            },
            ["sssi", t, m] => Method::Sssi {
                tuning: Tuning::Fixed(num(t)?),
                sweeps: count(m)?,
            },
            _ => return Err(bad()),
        };
        match method {
            Method::Knn { k: 0 } | Method::Sssi { sweeps: 0, .. } => Err(bad()),
            Method::Ssi {
                tuning: Tuning::Fixed(t),
            }
            | Method::Sssi {
                tuning: Tuning::Fixed(t),
                ..
            } if !(t.is_finite() && t >= 0.0) => Err(bad()),
            m => Ok(m),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub grid: TauGrid,
    pub tune: TuneOptions,
}

/// Imputed training and test covariates of one replication.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub train: ImputationResult,
    /// Test rows, imputed with the test responses hidden.
    pub test_x: DMatrix<f64>,
    pub params: Option<ScaleParams>,
}

fn choose_params(train: &MissingDataset, tuning: Tuning, config: &BenchConfig) -> Result<ScaleParams> {
    match tuning {
        Tuning::Interchangeable => Ok(tune_interchangeable(train, &config.grid, &config.tune)?.params()),
        Tuning::Cv => Ok(tune_cv(train, &config.grid, &config.tune)?.params()),
        Tuning::Fixed(tau) => ScaleParams::from_tau(tau, train.n(), validate(train)?.d0),
    }
}

/// Runs `method` on the training part of `draw` and on the stacked data.
pub fn run_method(draw: &SimDraw, method: Method, config: &BenchConfig) -> Result<MethodRun> {
    let train = draw.train_dataset();
    let test = draw.test_dataset();
    let n_train = train.n();
    let test_rows: Vec<usize> = (n_train..n_train + test.n()).collect();
    let stacked = train.stack(&test)?.mask_responses(&test_rows);
    let opts = &config.tune.impute;
    let (train_result, stacked_result, params) = match method {
        Method::Mean => (baseline_mean(&train)?, baseline_mean(&stacked)?, None),
        Method::Knn { k } => (baseline_knn(&train, k)?, baseline_knn(&stacked, k)?, None),
        Method::Ssi { tuning } => {
            let params = choose_params(&train, tuning, config)?;
            (
                impute_all(&train, &params, opts)?,
                impute_all(&stacked, &params, opts)?,
                Some(params),
            )
        }
        Method::Sssi { tuning, sweeps } => {
            let params = choose_params(&train, tuning, config)?;
            (
                impute_sssi(&train, &params, sweeps, opts)?,
                impute_sssi(&stacked, &params, sweeps, opts)?,
                Some(params),
            )
        }
    };
    Ok(MethodRun {
        train: train_result,
        test_x: stacked_result.x_hat.rows(n_train, test.n()).into_owned(),
        params,
    })
}

/// Metrics of `method` on one replication.
pub fn score_replication(draw: &SimDraw, method: Method, config: &BenchConfig) -> Result<RepMetrics> {
    let run = run_method(draw, method, config)?;
    let (ia_raw, ia_rmse) =
        imputation_accuracy(&run.train.x_hat, &draw.train_truth(), &run.train.imputed);
    let y_train = DVector::from_iterator(draw.train.len(), draw.train.iter().map(|&i| draw.y[i]));
    let y_test = DVector::from_iterator(draw.test.len(), draw.test.iter().map(|&i| draw.y[i]));
    let (design, test_design, beta) = if config.tune.intercept {
        let mut beta = DVector::zeros(draw.beta_true.len() + 1);
        beta.rows_mut(1, draw.beta_true.len()).copy_from(&draw.beta_true);
        (with_intercept(&run.train.x_hat), with_intercept(&run.test_x), beta)
    } else {
        (run.train.x_hat.clone(), run.test_x.clone(), draw.beta_true.clone())
    };
    let fit = fit_ols(&design, &y_train)?;
    let (pa_raw, pa_rmse) = prediction_accuracy(&predict_rows(&fit, &test_design)?, &y_test);
    Ok(RepMetrics {
        ia_raw,
        ia_rmse,
        ea: estimation_accuracy(&fit.beta_hat, &beta),
        pa_raw,
        pa_rmse,
    })
}

/// Aggregate of one scenario and method over the replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub scenario: usize,
    pub settings: SimScenario,
    pub method: Method,
    pub requested: usize,
    pub completed: usize,
    pub dropped: usize,
    pub mean: RepMetrics,
    /// Sample standard deviation across completed replications.
    pub se: RepMetrics,
    /// Set when fewer than two replications completed, so `se` is zero by
    /// convention.
    pub se_undefined: bool,
    /// Per replication, in replication order; `None` for dropped ones.
    pub reps: Vec<Option<RepMetrics>>,
}

impl BenchCell {
    fn aggregate(
        scenario: usize,
        settings: &SimScenario,
        method: Method,
        reps: Vec<Option<RepMetrics>>,
    ) -> Self {
        let done: Vec<[f64; 5]> = reps.iter().flatten().map(RepMetrics::values).collect();
        let k = done.len();
        let mut mean = [0.0; 5];
        let mut se = [0.0; 5];
        if k > 0 {
            for m in 0..5 {
                mean[m] = done.iter().map(|v| v[m]).sum::<f64>() / k as f64;
                if k > 1 {
                    let ss: f64 = done.iter().map(|v| (v[m] - mean[m]).powi(2)).sum();
                    se[m] = (ss / (k - 1) as f64).sqrt();
                }
            }
        }
        Self {
            scenario,
            settings: settings.clone(),
            method,
            requested: reps.len(),
            completed: k,
            dropped: reps.len() - k,
            mean: RepMetrics::from_values(mean),
            se: RepMetrics::from_values(se),
            se_undefined: k < 2,
            reps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
}

pub const TSV_HEADER: &str = "# ssimpute bench v1";

impl BenchTable {
    pub fn cell(&self, scenario: usize, method: Method) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.method == method)
    }

    /// One row per cell after a versioned comment line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(TSV_HEADER);
        out.push('\n');
        let mut cols = vec![
            "scenario", "n", "p", "rho", "cov_structure", "covariate_law", "r2", "mechanism",
            "pattern_family", "method", "requested", "completed", "dropped",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        for name in RepMetrics::NAMES {
            cols.push(name.to_string());
            cols.push(format!("{name}_se"));
        }
        cols.push("se_undefined".into());
        out.push_str(&cols.join("\t"));
        out.push('\n');
        for c in &self.cells {
            let s = &c.settings;
            let mut row = vec![
                c.scenario.to_string(),
                s.n.to_string(),
                s.p.to_string(),
                s.rho.to_string(),
                enum_name(&s.cov_structure),
                enum_name(&s.covariate_law),
                s.r2.to_string(),
                enum_name(&s.mechanism),
                enum_name(&s.pattern_family),
                c.method.to_string(),
                c.requested.to_string(),
                c.completed.to_string(),
                c.dropped.to_string(),
            ];
            for (m, e) in c.mean.values().iter().zip(c.se.values()) {
                row.push(m.to_string());
                row.push(e.to_string());
            }
            row.push(c.se_undefined.to_string());
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    /// One JSON object per cell.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.cells {
            out.push_str(&serde_json::to_string(c)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Long-format per-replication values for plotting.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("# ssimpute plot v1\nscenario,method,rep,metric,value\n");
        for c in &self.cells {
            for (r, rep) in c.reps.iter().enumerate() {
                if let Some(m) = rep {
                    for (name, v) in RepMetrics::NAMES.iter().zip(m.values()) {
                        out.push_str(&format!("{},{},{r},{name},{v}\n", c.scenario, c.method));
                    }
                }
            }
        }
        out
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

/// Every method on `reps` replications of every scenario. Replication `r`
/// of a scenario uses stream `r` of the scenario seed, so all methods see
/// the same data.
pub fn run_bench(
    scenarios: &[SimScenario],
    methods: &[Method],
    reps: usize,
    config: &BenchConfig,
) -> Result<BenchTable> {
    if reps == 0 {
        return Err(Error::InvalidScenario("reps must be at least 1".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    let mut cells = Vec::new();
    for (si, scenario) in scenarios.iter().enumerate() {
        let per_rep: Vec<Vec<Option<RepMetrics>>> = (0..reps as u64)
            .into_par_iter()
            .map(|r| match draw(scenario, r) {
                Ok(d) => methods
                    .iter()
                    .map(|&m| score_replication(&d, m, config).ok())
                    .collect(),
                Err(_) => vec![None; methods.len()],
            })
            .collect();
        for (mi, &method) in methods.iter().enumerate() {
            let reps: Vec<Option<RepMetrics>> = per_rep.iter().map(|r| r[mi]).collect();
            cells.push(BenchCell::aggregate(si, scenario, method, reps));
        }
    }
    Ok(BenchTable { cells })
}

/// Contents of a scenario matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub scenarios: Vec<SimScenario>,
    pub methods: Vec<Method>,
    pub reps: usize,
    #[serde(default)]
    pub grid: Option<String>,
}
