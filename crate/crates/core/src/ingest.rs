//! CSV loaders for externally supplied series and ground-truth graphs.
//!
//! Series files hold one row per time step and one column per component.
//! Several independent recordings (e.g. perturbation trajectories) can share
//! a file through a sequence-id column; rows with the same id must be
//! contiguous. Locations in error messages are 1-based: data rows exclude
//! the header, columns count every field of the row.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datagen::{standardize, GroundTruthAdjacency, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub series_path: PathBuf,
    #[serde(default)]
    pub truth_path: Option<PathBuf>,
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Header name of the sequence-id column; requires `has_header`.
    #[serde(default)]
    pub sequence_column: Option<String>,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Truth file stores `(i, j) = 1` for "i causes j"; transpose on load.
    #[serde(default)]
    pub transpose_truth: bool,
}

fn yes() -> bool {
    true
}

impl DatasetManifest {
    pub fn new(series_path: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            series_path: series_path.into(),
            truth_path: None,
            has_header: true,
            sequence_column: None,
            standardize: true,
            transpose_truth: false,
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolve(&self, base: &Path) -> Self {
        let join = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        DatasetManifest {
            series_path: join(&self.series_path),
            truth_path: self.truth_path.as_deref().map(join),
            ..self.clone()
        }
    }
}

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path, has_header: bool) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = if has_header {
        match records.next() {
            Some(r) => Some(r?.iter().map(str::to_string).collect()),
            None => None,
        }
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            message: "file contains no data rows".into(),
        });
    }
    Ok(Table { header, rows })
}

fn check_rectangular(path: &Path, table: &Table) -> Result<usize> {
    let width = table
        .header
        .as_ref()
        .map_or(table.rows[0].len(), |h| h.len());
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: r + 1,
                column: row.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", row.len()),
            });
        }
    }
    Ok(width)
}

fn parse_cell(path: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            column: column + 1,
            message: format!("not a finite number: {cell:?}"),
        }),
    }
}

/// Loads a series file, splitting it into sequences when a sequence column is
/// named, and standardizes it when the manifest asks for it.
pub fn load_series(manifest: &DatasetManifest) -> Result<TimeSeriesDataset> {
    let path = manifest.series_path.as_path();
    let table = read_table(path, manifest.has_header)?;
    let width = check_rectangular(path, &table)?;
    let seq_col = match (&manifest.sequence_column, &table.header) {
        (None, _) => None,
        (Some(name), Some(header)) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Malformed {
                path: path.to_path_buf(),
                message: format!("no column named {name:?} in header"),
            }
        })?),
        (Some(_), None) => {
            return Err(Error::Config(
                "dataset.sequence_column requires has_header = true".into(),
            ))
        }
    };
    let value_cols: Vec<usize> = (0..width).filter(|&c| Some(c) != seq_col).collect();
    if value_cols.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            message: "file has no value columns".into(),
        });
    }
    let labels = table
        .header
        .as_ref()
        .map(|h| value_cols.iter().map(|&c| h[c].clone()).collect());

    let mut sequences = Vec::new();
    let mut seen_ids: Vec<&str> = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_rows = 0usize;
    let n = value_cols.len();
    for (r, row) in table.rows.iter().enumerate() {
        if let Some(c) = seq_col {
            let id = row[c].as_str();
            if seen_ids.last() != Some(&id) {
                if seen_ids.contains(&id) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        row: r + 1,
                        column: c + 1,
                        message: format!("rows of sequence {id:?} are not contiguous"),
                    });
                }
                if current_rows > 0 {
                    sequences.push(finish(std::mem::take(&mut current), current_rows, n));
                    current_rows = 0;
                }
                seen_ids.push(id);
            }
        }
        for &c in &value_cols {
            current.push(parse_cell(path, r, c, &row[c])?);
        }
        current_rows += 1;
    }
    sequences.push(finish(current, current_rows, n));
    if let Some(s) = sequences.iter().position(|s| s.nrows() < 2) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            message: format!("sequence {} has fewer than 2 rows", seen_ids.get(s).unwrap_or(&"0")),
        });
    }
    let ds = TimeSeriesDataset::new(sequences, labels)?;
    if manifest.standardize {
        Ok(standardize(&ds)?.0)
    } else {
        Ok(ds)
    }
}

fn finish(values: Vec<f64>, rows: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, n), values).expect("row width checked")
}

/// Loads a headerless numeric matrix.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let table = read_table(path, false)?;
    let width = check_rectangular(path, &table)?;
    let mut values = Vec::with_capacity(width * table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            values.push(parse_cell(path, r, c, cell)?);
        }
    }
    Ok(finish(values, table.rows.len(), width))
}

/// Loads an `n x n` 0/1 adjacency with `(i, j) = 1` meaning "j causes i",
/// or the transpose convention when `transpose` is set.
pub fn load_adjacency(path: &Path, n: usize, transpose: bool) -> Result<GroundTruthAdjacency> {
    let m = load_matrix(path)?;
    if m.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "{}: expected a {n}x{n} adjacency, found {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(((i, j), v)) = m.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: j + 1,
            message: format!("adjacency entries must be 0 or 1, found {v}"),
        });
    }
    let edges = m.mapv(|v| v as u8);
    GroundTruthAdjacency::new(if transpose { edges.reversed_axes() } else { edges })
}
