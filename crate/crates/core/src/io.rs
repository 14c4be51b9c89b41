//! Delimited text input and output.
//!
//! A data file holds the response and the covariates, one subject per line.
//! Its companion schema file has one line per column, `name,kind[,classes]`,
//! where `kind` is `response`, `continuous` or `discrete` and the classes of
//! a discrete column follow as further comma-separated values. Lines starting
//! with `#` are comments in both files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{validate, ColumnDiagnostics, ColumnSchema, ImputationResult, MissingDataset};
use crate::error::{Error, Result};
use crate::kernel::ScaleParams;

pub const DATA_HEADER: &str = "# ssimpute data v1";
pub const DIAGNOSTICS_VERSION: &str = "ssimpute diagnostics v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSpec {
    pub path: PathBuf,
    pub delimiter: u8,
    /// Tokens read as missing, matched on the whole trimmed cell.
    pub missing_markers: Vec<String>,
    pub header: bool,
    pub schema_path: PathBuf,
}

impl CsvSpec {
    /// Comma separated with a header, `NA` and empty cells missing, and the
    /// schema next to the data as `<path>.schema`.
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        Self {
            schema_path: schema_path_for(&path),
            path,
            delimiter: b',',
            missing_markers: vec!["NA".into(), String::new()],
            header: true,
        }
    }
}

pub fn schema_path_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".schema");
    PathBuf::from(s)
}

pub fn diagnostics_path_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".diagnostics.json");
    PathBuf::from(s)
}

/// Column layout of a data file.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub response: String,
    pub covariates: Vec<ColumnSchema>,
}

impl TableSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut response = None;
        let mut covariates = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |msg: &str| Error::InvalidSchema(format!("line {}: {msg}", ln + 1));
            let name = fields[0];
            if name.is_empty() {
                return Err(bad("empty column name"));
            }
            match fields.get(1).copied() {
                Some("response") if fields.len() == 2 => {
                    if response.replace(name.to_string()).is_some() {
                        return Err(bad("more than one response column"));
                    }
                }
                Some("continuous") if fields.len() == 2 => {
                    covariates.push(ColumnSchema::continuous(name));
                }
                Some("discrete") => {
                    let classes = fields[2..]
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("class {t:?} is not a number"))))
                        .collect::<Result<Vec<_>>>()?;
                    covariates.push(ColumnSchema::discrete(name, classes));
                }
                Some(kind) => return Err(bad(&format!("cannot read kind {kind:?} with {} fields", fields.len()))),
                None => return Err(bad("missing kind")),
            }
        }
        let response = response.ok_or_else(|| Error::InvalidSchema("no response column".into()))?;
        if covariates.is_empty() {
            return Err(Error::InvalidSchema("no covariate columns".into()));
        }
        Ok(Self {
            response,
            covariates,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# ssimpute schema v1\n");
        out.push_str(&format!("{},response\n", self.response));
        for c in &self.covariates {
            if c.is_discrete() {
                let classes: Vec<String> = c.classes().iter().map(f64::to_string).collect();
                out.push_str(&format!("{},discrete,{}\n", c.name, classes.join(",")));
            } else {
                out.push_str(&format!("{},continuous\n", c.name));
            }
        }
        out
    }

    fn names(&self) -> Vec<&str> {
        std::iter::once(self.response.as_str())
            .chain(self.covariates.iter().map(|c| c.name.as_str()))
            .collect()
    }
}

/// A dataset together with the names it was read under.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: TableSchema,
    pub dataset: MissingDataset,
}

pub fn load_csv(spec: &CsvSpec) -> Result<MissingDataset> {
    Ok(load_table(spec)?.dataset)
}

pub fn load_table(spec: &CsvSpec) -> Result<Table> {
    let schema = TableSchema::read(&spec.schema_path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(&spec.path)?;
    let names = schema.names();
    let width = names.len();
    let mut order: Vec<usize> = (0..width).collect();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    let mut first = spec.header;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::SchemaMismatch(format!(
                "line {line} has {} fields, schema declares {width} columns",
                record.len()
            )));
        }
        if first {
            first = false;
            order = header_order(&record, &names)?;
            continue;
        }
        let mut cells = vec![None; width];
        for (file_col, token) in record.iter().enumerate() {
            let token = token.trim();
            if spec.missing_markers.iter().any(|m| m == token) {
                continue;
            }
            let v = token.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                column: file_col + 1,
                token: token.to_string(),
            })?;
            cells[order[file_col]] = Some(v);
        }
        y.push(cells[0]);
        rows.push(cells[1..].to_vec());
    }
    let dataset = MissingDataset::from_rows(y, &rows, schema.covariates.clone())?;
    validate(&dataset)?;
    Ok(Table { schema, dataset })
}

/// Maps each file column to its schema position.
fn header_order(record: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    let mut order = Vec::with_capacity(names.len());
    for field in record.iter() {
        let field = field.trim();
        let pos = names
            .iter()
            .position(|n| *n == field)
            .ok_or_else(|| Error::SchemaMismatch(format!("header column {field:?} is not in the schema")))?;
        if order.contains(&pos) {
            return Err(Error::SchemaMismatch(format!("header repeats column {field:?}")));
        }
        order.push(pos);
    }
    Ok(order)
}

/// Writes the response and `x` in schema order, `NA` for missing cells.
pub fn write_table(
    path: &Path,
    schema: &TableSchema,
    y: &[Option<f64>],
    x: &DMatrix<Option<f64>>,
) -> Result<()> {
    let mut out = String::from(DATA_HEADER);
    out.push('\n');
    out.push_str(&schema.names().join(","));
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    for (i, yi) in y.iter().enumerate() {
        let mut row = vec![cell(*yi)];
        row.extend((0..x.ncols()).map(|j| cell(x[(i, j)])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    fs::write(schema_path_for(path), schema.to_text())?;
    Ok(())
}

pub fn save_dataset(path: &Path, schema: &TableSchema, ds: &MissingDataset) -> Result<()> {
    let y: Vec<Option<f64>> = (0..ds.n()).map(|i| ds.response(i)).collect();
    let x = DMatrix::from_fn(ds.n(), ds.p(), |i, j| ds.value(i, j));
    write_table(path, schema, &y, &x)
}

#[derive(Debug, Serialize)]
struct ColumnReport<'a> {
    name: &'a str,
    #[serde(flatten)]
    diagnostics: &'a ColumnDiagnostics,
}

#[derive(Debug, Serialize)]
struct Diagnostics<'a> {
    version: &'static str,
    params_used: Option<ScaleParams>,
    sweeps: usize,
    imputed_cells: usize,
    imputed_per_column: Vec<usize>,
    fallback_columns: Vec<&'a str>,
    columns: Vec<ColumnReport<'a>>,
}

/// Writes the completed matrix with its schema and a JSON diagnostics
/// sidecar at `<path>.diagnostics.json`. Existing files are replaced.
pub fn save_result(
    path: &Path,
    schema: &TableSchema,
    dataset: &MissingDataset,
    result: &ImputationResult,
) -> Result<()> {
    if result.x_hat.shape() != (dataset.n(), dataset.p()) || schema.covariates.len() != dataset.p() {
        return Err(Error::DimensionMismatch("result does not match the dataset".into()));
    }
    let y: Vec<Option<f64>> = (0..dataset.n()).map(|i| dataset.response(i)).collect();
    write_table(path, schema, &y, &result.x_hat.map(Some))?;
    let names: Vec<&str> = schema.covariates.iter().map(|c| c.name.as_str()).collect();
    let diagnostics = Diagnostics {
        version: DIAGNOSTICS_VERSION,
        params_used: result.params,
        sweeps: result.sweeps,
        imputed_cells: result.imputed.iter().filter(|&&m| m).count(),
        imputed_per_column: result.imputed.column_iter().map(|c| c.iter().filter(|&&m| m).count()).collect(),
        fallback_columns: result.fallback_columns().into_iter().map(|j| names[j]).collect(),
        columns: names
            .iter()
            .zip(&result.columns)
            .map(|(name, d)| ColumnReport { name, diagnostics: d })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&diagnostics)?;
    json.push('\n');
    fs::write(diagnostics_path_for(path), json)?;
    Ok(())
}
