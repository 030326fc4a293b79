//! CSV ingestion for design matrices and responses.
//!
//! One table per file. The first row may be a header (flag-controlled); the
//! response column, when present, is picked by name or 0-based index. Bad
//! cells are rejected with their 1-based row/column coordinates.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// How to locate the response column in a combined design/response table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseSelector {
    Name(String),
    Index(usize),
}

impl ResponseSelector {
    /// Parses a CLI value: a nonnegative integer is an index, anything else
    /// a column name.
    pub fn parse(raw: &str) -> ResponseSelector {
        match raw.parse::<usize>() {
            Ok(i) => ResponseSelector::Index(i),
            Err(_) => ResponseSelector::Name(raw.to_string()),
        }
    }
}

fn read_rows(path: &Path, has_header: bool) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path_str.clone(),
            source: e,
        })?;

    let header: Vec<String> = if has_header {
        reader
            .headers()
            .map_err(|e| Error::Csv {
                path: path_str.clone(),
                source: e,
            })?
            .iter()
            .map(|h| h.to_string())
            .collect()
    } else {
        Vec::new()
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        rows.push(record.iter().map(|c| c.to_string()).collect());
    }
    Ok((header, rows))
}

fn parse_cell(path: &Path, row: usize, col: usize, raw: &str) -> Result<f64> {
    let bad = |reason: &str| Error::CsvCell {
        path: path.display().to_string(),
        row: row + 1,
        column: col + 1,
        reason: reason.to_string(),
    };
    if raw.is_empty() {
        return Err(bad("empty cell"));
    }
    let v: f64 = raw.parse().map_err(|_| bad("not a number"))?;
    if !v.is_finite() {
        return Err(bad("non-finite value"));
    }
    Ok(v)
}

/// Loads a design-only CSV into an n x p matrix.
pub fn load_design_csv(path: &Path, has_header: bool) -> Result<Array2<f64>> {
    let (_, rows) = read_rows(path, has_header)?;
    rows_to_matrix(path, &rows)
}

fn rows_to_matrix(path: &Path, rows: &[Vec<String>]) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let p = rows[0].len();
    let mut values = Array2::<f64>::zeros((rows.len(), p));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::CsvCell {
                path: path.display().to_string(),
                row: i + 1,
                column: row.len(),
                reason: format!("expected {p} columns, found {}", row.len()),
            });
        }
        for (j, cell) in row.iter().enumerate() {
            values[[i, j]] = parse_cell(path, i, j, cell)?;
        }
    }
    Ok(values)
}

/// Loads a combined table, splitting off the response column.
pub fn load_design_response_csv(
    path: &Path,
    has_header: bool,
    response: &ResponseSelector,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (header, rows) = read_rows(path, has_header)?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    let response_col = match response {
        ResponseSelector::Index(i) => {
            if *i >= width {
                return Err(Error::IndexOutOfRange {
                    index: *i,
                    size: width,
                    context: format!("response column of {}", path.display()),
                });
            }
            *i
        }
        ResponseSelector::Name(name) => {
            if !has_header {
                return Err(Error::InvalidParameter(format!(
                    "response column {name:?} requested by name, but {} has no header row",
                    path.display()
                )));
            }
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidParameter(format!(
                    "response column {name:?} not found in header of {}",
                    path.display()
                )))?
        }
    };
    if width < 2 {
        return Err(Error::InvalidParameter(format!(
            "{}: need at least one predictor column besides the response",
            path.display()
        )));
    }

    let n = rows.len();
    let p = width - 1;
    let mut design = Array2::<f64>::zeros((n, p));
    let mut y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::CsvCell {
                path: path.display().to_string(),
                row: i + 1,
                column: row.len(),
                reason: format!("expected {width} columns, found {}", row.len()),
            });
        }
        let mut k = 0;
        for (j, cell) in row.iter().enumerate() {
            let v = parse_cell(path, i, j, cell)?;
            if j == response_col {
                y.push(v);
            } else {
                design[[i, k]] = v;
                k += 1;
            }
        }
    }
    Ok((design, y))
}
