use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use ssimpute::bench::{run_bench, BenchConfig, BenchSpec};
use ssimpute::io::{load_table, save_dataset, save_result, write_table, CsvSpec, Table, TableSchema};
use ssimpute::regression::with_intercept;
use ssimpute::simulation::draw;
use ssimpute::{
    fit_ols, impute_all, impute_sssi, tune_cv, tune_interchangeable, validate, DiscreteSolver,
    Error, ErrorClass, ImputationResult, ImputeOptions, ScaleParams, SimScenario, SweepRefresh,
    TauGrid, TuneOptions, TuneReport,
};

#[derive(Parser, Debug)]
#[command(name = "ssimpute", version, about = "Graph-based imputation of missing covariates")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for `simulate` and `bench`; replaces the scenario seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Impute a data file and write the completed matrix.
    Impute {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        scale: ScaleArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score a grid of scales and report the selected one.
    Tune {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = TuneKind::Interchangeable)]
        criterion: TuneKind,
        #[command(flatten)]
        tuning: TuningArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output file; standard output when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Least squares on the imputed data.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        scale: ScaleArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw one simulated dataset.
    Simulate {
        /// JSON scenario; fields not given take their defaults.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        rho: Option<f64>,
        /// exchangeable or ar1
        #[arg(long)]
        cov_structure: Option<String>,
        /// normal or exponential
        #[arg(long)]
        covariate_law: Option<String>,
        #[arg(long)]
        r2: Option<f64>,
        /// mcar, mar, mnar, mnar2 or mnar3
        #[arg(long)]
        mechanism: Option<String>,
        /// blockwise7 or none
        #[arg(long)]
        pattern_family: Option<String>,
        #[arg(long)]
        missing_rate: Option<f64>,
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Replication index, which selects the random stream.
        #[arg(long, default_value_t = 0)]
        rep: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a scenario matrix and tabulate the metrics.
    Bench {
        /// JSON file with `scenarios`, `methods`, `reps` and optional `grid`.
        spec: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        /// Per-replication values in long format for plotting.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// One JSON object per cell.
        #[arg(long)]
        jsonl: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Delimited data file.
    input: PathBuf,
    /// Schema file; defaults to `<input>.schema`.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Missing-value marker; repeat for several. Defaults to `NA` and the empty cell.
    #[arg(long = "na")]
    missing_markers: Vec<String>,
    /// The first line holds data, not column names.
    #[arg(long)]
    no_header: bool,
}

impl InputArgs {
    fn spec(&self) -> Result<CsvSpec, CliError> {
        let mut spec = CsvSpec::new(&self.input);
        if let Some(s) = &self.schema {
            spec.schema_path = s.clone();
        }
        if !self.delimiter.is_ascii() {
            return Err(CliError::usage("delimiter must be a single ASCII character"));
        }
        spec.delimiter = self.delimiter as u8;
        if !self.missing_markers.is_empty() {
            spec.missing_markers = self.missing_markers.clone();
        }
        spec.header = !self.no_header;
        require_file(&spec.path)?;
        require_file(&spec.schema_path)?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
#[group(multiple = true)]
struct ScaleArgs {
    /// Normalized scale; the kernel uses tau * n^(1/(2 d0 + 1)).
    #[arg(long, conflicts_with_all = ["lambda1", "tune"])]
    tau: Option<f64>,
    /// Response scale, given together with --lambda2.
    #[arg(long, requires = "lambda2", conflicts_with = "tune")]
    lambda1: Option<f64>,
    /// Covariate scale, given together with --lambda1.
    #[arg(long, requires = "lambda1")]
    lambda2: Option<f64>,
    /// Select tau on the data itself.
    #[arg(long, value_enum)]
    tune: Option<TuneKind>,
    /// Sequential sweeps after the first pass.
    #[arg(long, default_value_t = 0)]
    sssi_sweeps: usize,
}

#[derive(Args, Debug)]
struct TuningArgs {
    /// Tuning grid as lo:hi:steps.
    #[arg(long, default_value = "0:2:21")]
    grid: String,
    /// Keep the target column in the distances of the swap step.
    #[arg(long)]
    swap_keep_column: bool,
    /// Intercept in the regression used by cv tuning and by `fit`.
    #[arg(long)]
    intercept: bool,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Stopping tolerance for label propagation.
    #[arg(long, default_value_t = ssimpute::impute::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = ssimpute::impute::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Give every subject unit similarity with itself.
    #[arg(long)]
    self_weight: bool,
    #[arg(long, value_enum, default_value_t = Refresh::PerColumn)]
    refresh: Refresh,
    /// How discrete columns are solved; tuning always scores with `direct`
    /// unless this is given.
    #[arg(long, value_enum)]
    discrete_solver: Option<Discrete>,
}

impl SolverArgs {
    fn options(&self) -> ImputeOptions {
        ImputeOptions {
            eps: self.eps,
            max_iter: self.max_iter,
            include_self_weight: self.self_weight,
            refresh: match self.refresh {
                Refresh::PerColumn => SweepRefresh::PerColumn,
                Refresh::PerSweep => SweepRefresh::PerSweep,
            },
            discrete_solver: match self.discrete_solver {
                Some(Discrete::Direct) => DiscreteSolver::Direct,
                _ => DiscreteSolver::Propagation,
            },
        }
    }

    fn tune_options(&self, tuning: &TuningArgs) -> TuneOptions {
        let mut impute = self.options();
        if self.discrete_solver.is_none() {
            impute.discrete_solver = DiscreteSolver::Direct;
        }
        TuneOptions {
            impute,
            swap_keep_column: tuning.swap_keep_column,
            intercept: tuning.intercept,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TuneKind {
    Interchangeable,
    Cv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Refresh {
    PerColumn,
    PerSweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Discrete {
    Propagation,
    Direct,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            },
        }
    }

    fn to_json(&self) -> Value {
        let (kind, class, message) = match self {
            CliError::Usage(m) => ("usage", "usage", m.clone()),
            CliError::Lib(e) => (
                e.kind(),
                match e.class() {
                    ErrorClass::Usage => "usage",
                    ErrorClass::Data => "data",
                    ErrorClass::Numeric => "numeric",
                },
                e.to_string(),
            ),
        };
        json!({ "error": kind, "class": class, "exit_code": self.code(), "message": message })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Lib(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a readable file", path.display()),
        ))))
    }
}

fn require_writable(path: &Path) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if path.is_dir() || !parent.is_dir() {
        return Err(CliError::Lib(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("cannot write {}", path.display()),
        ))));
    }
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn tune(
    table: &Table,
    kind: TuneKind,
    tuning: &TuningArgs,
    options: &TuneOptions,
) -> CliResult<TuneReport> {
    let grid: TauGrid = tuning.grid.parse()?;
    Ok(match kind {
        TuneKind::Interchangeable => tune_interchangeable(&table.dataset, &grid, options)?,
        TuneKind::Cv => tune_cv(&table.dataset, &grid, options)?,
    })
}

/// Scale parameters requested on the command line, or `None` if none were.
fn resolve_scale(
    table: &Table,
    scale: &ScaleArgs,
    tuning: &TuningArgs,
    solver: &SolverArgs,
) -> CliResult<Option<ScaleParams>> {
    if let Some(tau) = scale.tau {
        let index = validate(&table.dataset)?;
        return Ok(Some(ScaleParams::from_tau(tau, table.dataset.n(), index.d0)?));
    }
    if let (Some(l1), Some(l2)) = (scale.lambda1, scale.lambda2) {
        return Ok(Some(ScaleParams::new(l1, l2)?));
    }
    if let Some(kind) = scale.tune {
        let report = tune(table, kind, tuning, &solver.tune_options(tuning))?;
        return Ok(Some(report.params()));
    }
    Ok(None)
}

fn impute_table(
    table: &Table,
    scale: &ScaleArgs,
    tuning: &TuningArgs,
    solver: &SolverArgs,
) -> CliResult<ImputationResult> {
    let params = resolve_scale(table, scale, tuning, solver)?.ok_or_else(|| {
        CliError::usage("choose a scale with --tau, --lambda1 and --lambda2, or --tune")
    })?;
    let options = solver.options();
    Ok(if scale.sssi_sweeps > 0 {
        impute_sssi(&table.dataset, &params, scale.sssi_sweeps, &options)?
    } else {
        impute_all(&table.dataset, &params, &options)?
    })
}

fn scenario_from(file: Option<&Path>, overrides: Map<String, Value>) -> CliResult<SimScenario> {
    let mut base = match file {
        Some(path) => {
            require_file(path)?;
            serde_json::from_str::<Value>(&fs::read_to_string(path)?).map_err(Error::from)?
        }
        None => json!({}),
    };
    let obj = base
        .as_object_mut()
        .ok_or_else(|| CliError::usage("scenario file must hold a JSON object"))?;
    obj.extend(overrides);
    serde_json::from_value(base).map_err(|e| CliError::usage(format!("invalid scenario: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Impute {
            input,
            scale,
            tuning,
            solver,
            output,
        } => {
            let spec = input.spec()?;
            require_writable(&output)?;
            let table = load_table(&spec)?;
            let result = impute_table(&table, &scale, &tuning, &solver)?;
            save_result(&output, &table.schema, &table.dataset, &result)?;
        }
        Command::Tune {
            input,
            criterion,
            tuning,
            solver,
            output,
        } => {
            let spec = input.spec()?;
            if let Some(o) = &output {
                require_writable(o)?;
            }
            let table = load_table(&spec)?;
            let report = tune(&table, criterion, &tuning, &solver.tune_options(&tuning))?;
            emit(output.as_deref(), &report.to_tsv())?;
        }
        Command::Fit {
            input,
            scale,
            tuning,
            solver,
            output,
        } => {
            let spec = input.spec()?;
            if let Some(o) = &output {
                require_writable(o)?;
            }
            let table = load_table(&spec)?;
            let ds = &table.dataset;
            if !ds.response_fully_observed() {
                return Err(Error::ResponseNotObserved.into());
            }
            let x = if ds.count_missing() == 0 {
                ds.raw_matrix().clone()
            } else {
                impute_table(&table, &scale, &tuning, &solver)?.x_hat
            };
            let y = DVector::from_column_slice(ds.responses());
            let design = if tuning.intercept { with_intercept(&x) } else { x };
            let fit = fit_ols(&design, &y)?;
            let mut names: Vec<&str> = table.schema.covariates.iter().map(|c| c.name.as_str()).collect();
            if tuning.intercept {
                names.insert(0, "(intercept)");
            }
            let mut text = format!(
                "# ssimpute fit v1\n# n={} p={} sigma2_hat={} rss={}\nterm\testimate\n",
                ds.n(),
                fit.p(),
                fit.sigma2_hat,
                fit.rss()
            );
            for (name, b) in names.iter().zip(fit.beta_hat.iter()) {
                text.push_str(&format!("{name}\t{b}\n"));
            }
            emit(output.as_deref(), &text)?;
        }
        Command::Simulate {
            scenario,
            n,
            p,
            rho,
            cov_structure,
            covariate_law,
            r2,
            mechanism,
            pattern_family,
            missing_rate,
            train_fraction,
            rep,
            output,
        } => {
            require_writable(&output)?;
            let mut o = Map::new();
            let mut set = |k: &str, v: Option<Value>| {
                if let Some(v) = v {
                    o.insert(k.to_string(), v);
                }
            };
            set("n", n.map(Value::from));
            set("p", p.map(Value::from));
            set("rho", rho.map(Value::from));
            set("cov_structure", cov_structure.map(Value::from));
            set("covariate_law", covariate_law.map(Value::from));
            set("r2", r2.map(Value::from));
            set("mechanism", mechanism.map(Value::from));
            set("pattern_family", pattern_family.map(Value::from));
            set("target_missing_rate", missing_rate.map(Value::from));
            set("train_fraction", train_fraction.map(Value::from));
            set("seed", cli.seed.map(Value::from));
            let s = scenario_from(scenario.as_deref(), o)?;
            let d = draw(&s, rep)?;
            let schema = TableSchema {
                response: "y".into(),
                covariates: s.schema(),
            };
            save_dataset(&output, &schema, &d.dataset)?;
            let truth_path = sidecar(&output, ".truth.csv");
            let y: Vec<Option<f64>> = d.y.iter().map(|&v| Some(v)).collect();
            write_table(&truth_path, &schema, &y, &d.x_true.map(Some))?;
            let meta = json!({
                "version": "ssimpute simulate v1",
                "scenario": s,
                "replication": rep,
                "beta_true": d.beta_true.as_slice(),
                "sigma2": d.sigma2,
                "alpha": d.alpha,
                "realized_rate": d.realized_rate,
                "train": d.train,
                "test": d.test,
            });
            fs::write(sidecar(&output, ".truth.json"), format!("{meta:#}\n"))?;
        }
        Command::Bench {
            spec,
            reps,
            plot,
            jsonl,
            tuning,
            output,
        } => {
            require_file(&spec)?;
            for path in std::iter::once(&output).chain(plot.iter()).chain(jsonl.iter()) {
                require_writable(path)?;
            }
            let mut bench: BenchSpec = serde_json::from_str(&fs::read_to_string(&spec)?)
                .map_err(|e| CliError::usage(format!("invalid bench spec: {e}")))?;
            if let Some(seed) = cli.seed {
                bench.scenarios.iter_mut().for_each(|s| s.seed = seed);
            }
            let grid = bench.grid.as_deref().unwrap_or(&tuning.grid).parse()?;
            let config = BenchConfig {
                grid,
                tune: TuneOptions {
                    swap_keep_column: tuning.swap_keep_column,
                    intercept: tuning.intercept,
                    ..TuneOptions::default()
                },
            };
            let table = run_bench(&bench.scenarios, &bench.methods, reps.unwrap_or(bench.reps), &config)?;
            fs::write(&output, table.to_tsv())?;
            if let Some(path) = plot {
                fs::write(path, table.plot_csv())?;
            }
            if let Some(path) = jsonl {
                fs::write(path, table.to_jsonl()?)?;
            }
        }
    }
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.kind().to_string());
            eprint!("{e}");
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
