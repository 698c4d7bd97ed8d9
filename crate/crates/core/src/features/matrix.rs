//! Named-column numeric matrix with a missing-value sentinel.
//!
//! Categorical columns store an index into a per-column level vocabulary so
//! a single `f64` buffer backs the whole matrix. The manifest (ordered
//! column names and kinds) is stable across runs for a fixed configuration.

use std::collections::HashMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{is_missing, MISSING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
        }
    }
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("row {key:?} has {got} values, manifest has {expected} columns")]
    RowWidth { key: String, got: usize, expected: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {0:?} is not categorical")]
    NotCategorical(String),
    #[error("column {0:?} is not numeric")]
    NotNumeric(String),
    #[error("duplicate row key {0:?}")]
    DuplicateKey(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Format(String),
}

/// Row-major matrix keyed by cell name.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    manifest: Vec<ColumnSpec>,
    row_keys: Vec<String>,
    values: Vec<f64>,
    /// Sorted level list per categorical column index.
    vocabularies: HashMap<usize, Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(manifest: Vec<ColumnSpec>) -> Self {
        let vocabularies = manifest
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Categorical)
            .map(|(i, _)| (i, Vec::new()))
            .collect();
        FeatureMatrix {
            manifest,
            row_keys: Vec::new(),
            values: Vec::new(),
            vocabularies,
        }
    }

    pub fn manifest(&self) -> &[ColumnSpec] {
        &self.manifest
    }

    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.manifest.len()
    }

    pub fn row_keys(&self) -> &[String] {
        &self.row_keys
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.manifest.iter().position(|c| c.name == name)
    }

    /// Set the level vocabulary of a categorical column. Levels are sorted
    /// for a stable encoding.
    pub fn set_vocabulary(&mut self, column: usize, mut levels: Vec<String>) {
        levels.sort();
        levels.dedup();
        self.vocabularies.insert(column, levels);
    }

    pub fn vocabulary(&self, column: usize) -> Option<&[String]> {
        self.vocabularies.get(&column).map(|v| v.as_slice())
    }

    /// Encode a categorical level through the column vocabulary.
    pub fn level_code(&self, column: usize, level: &str) -> Result<f64, MatrixError> {
        let name = &self.manifest[column].name;
        let vocab = self
            .vocabularies
            .get(&column)
            .ok_or_else(|| MatrixError::NotCategorical(name.clone()))?;
        match vocab.binary_search_by(|l| l.as_str().cmp(level)) {
            Ok(i) => Ok(i as f64),
            Err(_) => Err(MatrixError::Format(format!(
                "level {level:?} missing from vocabulary of {name:?}"
            ))),
        }
    }

    pub fn level_of(&self, column: usize, code: f64) -> Option<&str> {
        self.vocabularies
            .get(&column)
            .and_then(|v| v.get(code as usize))
            .map(|s| s.as_str())
    }

    pub fn push_row(&mut self, key: String, row: Vec<f64>) -> Result<(), MatrixError> {
        if row.len() != self.manifest.len() {
            return Err(MatrixError::RowWidth {
                key,
                got: row.len(),
                expected: self.manifest.len(),
            });
        }
        self.row_keys.push(key);
        self.values.extend_from_slice(&row);
        Ok(())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.manifest.len() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.manifest.len() + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.manifest.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.manifest.len();
        (0..self.n_rows()).map(move |r| self.values[r * w + col])
    }

    /// A matrix with the same manifest and vocabularies but the subset of
    /// rows given by `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let w = self.manifest.len();
        let mut values = Vec::with_capacity(rows.len() * w);
        let mut row_keys = Vec::with_capacity(rows.len());
        for &r in rows {
            row_keys.push(self.row_keys[r].clone());
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            manifest: self.manifest.clone(),
            row_keys,
            values,
            vocabularies: self.vocabularies.clone(),
        }
    }

    /// Serialize as CSV: `cell_name` plus manifest columns. The missing
    /// sentinel becomes an empty field; categorical codes are written as
    /// their level strings.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), MatrixError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.manifest.len() + 1);
        header.push("cell_name".to_string());
        header.extend(self.manifest.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;

        let mut line = Vec::with_capacity(header.len());
        for r in 0..self.n_rows() {
            line.clear();
            line.push(self.row_keys[r].clone());
            for (c, spec) in self.manifest.iter().enumerate() {
                let v = self.get(r, c);
                let field = match spec.kind {
                    ColumnKind::Numeric if is_missing(v) => String::new(),
                    ColumnKind::Numeric => format!("{v}"),
                    ColumnKind::Categorical => self
                        .level_of(c, v)
                        .ok_or_else(|| {
                            MatrixError::Format(format!("bad level code {v} in {:?}", spec.name))
                        })?
                        .to_string(),
                };
                line.push(field);
            }
            w.write_record(&line)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a matrix written by [`FeatureMatrix::write_csv`], given the
    /// manifest. Categorical vocabularies are rebuilt from the data.
    pub fn read_csv<R: io::Read>(reader: R, manifest: Vec<ColumnSpec>) -> Result<Self, MatrixError> {
        let mut csv_reader = csv::ReaderBuilder::new().from_reader(reader);
        let header = csv_reader.headers()?.clone();
        if header.get(0) != Some("cell_name") {
            return Err(MatrixError::Format("matrix csv must start with cell_name".into()));
        }
        if header.len() != manifest.len() + 1 {
            return Err(MatrixError::Format(format!(
                "matrix csv has {} data columns, manifest has {}",
                header.len() - 1,
                manifest.len()
            )));
        }
        for (i, spec) in manifest.iter().enumerate() {
            if header.get(i + 1) != Some(spec.name.as_str()) {
                return Err(MatrixError::Format(format!(
                    "column {} is {:?}, manifest expects {:?}",
                    i + 1,
                    header.get(i + 1).unwrap_or(""),
                    spec.name
                )));
            }
        }

        // First pass: rows as strings; collect categorical levels.
        let mut raw_rows: Vec<(String, csv::StringRecord)> = Vec::new();
        let mut levels: HashMap<usize, Vec<String>> = manifest
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Categorical)
            .map(|(i, _)| (i, Vec::new()))
            .collect();
        for row in csv_reader.records() {
            let row = row?;
            let key = row.get(0).unwrap_or("").to_string();
            for (col, spec) in manifest.iter().enumerate() {
                if spec.kind == ColumnKind::Categorical {
                    levels
                        .get_mut(&col)
                        .unwrap()
                        .push(row.get(col + 1).unwrap_or("").to_string());
                }
            }
            raw_rows.push((key, row));
        }

        let mut matrix = FeatureMatrix::new(manifest);
        for (col, lv) in levels {
            matrix.set_vocabulary(col, lv);
        }
        for (key, row) in raw_rows {
            let mut values = Vec::with_capacity(matrix.manifest.len());
            for (col, spec) in matrix.manifest.clone().iter().enumerate() {
                let field = row.get(col + 1).unwrap_or("");
                let v = match spec.kind {
                    ColumnKind::Numeric if field.is_empty() => MISSING,
                    ColumnKind::Numeric => field.parse::<f64>().map_err(|_| {
                        MatrixError::Format(format!("bad numeric {field:?} in column {:?}", spec.name))
                    })?,
                    ColumnKind::Categorical => matrix.level_code(col, field)?,
                };
                values.push(v);
            }
            matrix.push_row(key, values)?;
        }
        Ok(matrix)
    }
}

/// Sidecar manifest document, JSON-serialized next to the matrix CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub columns: Vec<ColumnSpec>,
}

impl ManifestFile {
    pub fn write<W: io::Write>(&self, writer: W) -> Result<(), MatrixError> {
        serde_json::to_writer_pretty(writer, self)
            .map_err(|e| MatrixError::Format(e.to_string()))
    }

    pub fn read<R: io::Read>(reader: R) -> Result<Self, MatrixError> {
        serde_json::from_reader(reader).map_err(|e| MatrixError::Format(e.to_string()))
    }
}
