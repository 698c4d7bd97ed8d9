//! Smoothed target-mean encoding of categorical columns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{ColumnKind, ColumnSpec, FeatureMatrix};

/// Level-to-value maps learned on training data. Unseen levels at
/// prediction time fall back to the global target mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub global_mean: f64,
    pub prior: f64,
    /// column name -> level -> encoded value.
    pub columns: BTreeMap<String, BTreeMap<String, f64>>,
}

impl CategoricalEncoder {
    /// Learn encodings from the categorical columns of `matrix`:
    /// `(sum_y_in_level + prior * global_mean) / (count + prior)`.
    pub fn fit(matrix: &FeatureMatrix, target: &[f64], prior: f64) -> Self {
        assert_eq!(matrix.n_rows(), target.len(), "target length must match rows");
        let global_mean = if target.is_empty() {
            0.0
        } else {
            target.iter().sum::<f64>() / target.len() as f64
        };

        let mut columns = BTreeMap::new();
        for (col, spec) in matrix.manifest().iter().enumerate() {
            if spec.kind != ColumnKind::Categorical {
                continue;
            }
            let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            for (r, y) in target.iter().enumerate() {
                let level = matrix
                    .level_of(col, matrix.get(r, col))
                    .expect("categorical code within vocabulary")
                    .to_string();
                let entry = sums.entry(level).or_insert((0.0, 0.0));
                entry.0 += y;
                entry.1 += 1.0;
            }
            let encoded: BTreeMap<String, f64> = sums
                .into_iter()
                .map(|(level, (sum, count))| (level, (sum + prior * global_mean) / (count + prior)))
                .collect();
            columns.insert(spec.name.clone(), encoded);
        }
        CategoricalEncoder {
            global_mean,
            prior,
            columns,
        }
    }

    pub fn encode_level(&self, column: &str, level: &str) -> f64 {
        self.columns
            .get(column)
            .and_then(|levels| levels.get(level))
            .copied()
            .unwrap_or(self.global_mean)
    }

    /// Replace every categorical column with its encoded values; the
    /// manifest keeps the column names but becomes all-numeric.
    pub fn transform(&self, matrix: &FeatureMatrix) -> FeatureMatrix {
        let manifest: Vec<ColumnSpec> = matrix
            .manifest()
            .iter()
            .map(|c| ColumnSpec::numeric(c.name.clone()))
            .collect();
        let mut out = FeatureMatrix::new(manifest);
        let categorical: Vec<usize> = matrix
            .manifest()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Categorical)
            .map(|(i, _)| i)
            .collect();
        for r in 0..matrix.n_rows() {
            let mut row = matrix.row(r).to_vec();
            for &col in &categorical {
                let level = matrix
                    .level_of(col, row[col])
                    .expect("categorical code within vocabulary");
                row[col] = self.encode_level(&matrix.manifest()[col].name, level);
            }
            out.push_row(matrix.row_keys()[r].clone(), row).expect("same width");
        }
        out
    }
}
