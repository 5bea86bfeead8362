//! CSV ingestion and output.
//!
//! Views are comma-separated decimal floats with an optional single header
//! line. Rows are numbered from 1, counting data rows only.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use cooplearn_core::data::DataView;
use cooplearn_core::{CoopError, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: empty input")]
    Empty { context: String },
    #[error("{context}: ragged row {row}: expected {expected} values, found {found}")]
    Ragged {
        context: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{context}: non-numeric value {value:?} at row {row}, column {col}")]
    NonNumeric {
        context: String,
        row: usize,
        col: usize,
        value: String,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: CoopError,
    },
}

/// A parsed numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub column_names: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows.len(), self.ncols(), |i, j| self.rows[i][j])
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a rectangular numeric CSV.
pub fn parse_table<R: Read>(reader: R, has_header: bool, context: &str) -> Result<Table, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut column_names = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IoError::Format {
            context: context.into(),
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if has_header && k == 0 {
            let names: Vec<String> = record.iter().map(str::to_string).collect();
            width = Some(names.len());
            column_names = Some(names);
            continue;
        }
        let row = rows.len() + 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IoError::Ragged {
                context: context.into(),
                row,
                expected,
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::NonNumeric {
                        context: context.into(),
                        row,
                        col: j + 1,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(IoError::Empty { context: context.into() });
    }
    Ok(Table { column_names, rows })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "view".into())
}

/// Reads one view; the view is named after the file stem.
pub fn load_view(path: &Path, has_header: bool) -> Result<DataView, IoError> {
    let context = path.display().to_string();
    let table = parse_table(open(path)?, has_header, &context)?;
    view_from_table(stem(path), table, &context)
}

pub fn view_from_table(name: String, table: Table, context: &str) -> Result<DataView, IoError> {
    let matrix = table.to_matrix();
    DataView::new(name, matrix, table.column_names).map_err(|source| IoError::Data {
        context: context.into(),
        source,
    })
}

/// Reads a single-column response.
pub fn load_response(path: &Path, has_header: bool) -> Result<Vec<f64>, IoError> {
    let context = path.display().to_string();
    let table = parse_table(open(path)?, has_header, &context)?;
    if table.ncols() != 1 {
        return Err(IoError::Format {
            context,
            message: format!("response must have one column, found {}", table.ncols()),
        });
    }
    Ok(table.rows.into_iter().map(|r| r[0]).collect())
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a matrix with a header line. Floats use the shortest exact form.
pub fn write_matrix(path: &Path, names: &[String], m: &Matrix) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| IoError::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(names).map_err(csv_err)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(write_err(path))
}

pub fn write_column(path: &Path, name: &str, values: &[f64]) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(create(path)?);
    writeln!(f, "{name}").map_err(write_err(path))?;
    for v in values {
        writeln!(f, "{v}").map_err(write_err(path))?;
    }
    f.flush().map_err(write_err(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| IoError::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    writeln!(f).map_err(write_err(path))?;
    f.flush().map_err(write_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).map_err(write_err(path))?;
    serde_json::from_str(&s).map_err(|e| IoError::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}
