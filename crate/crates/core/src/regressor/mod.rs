//! A minimal, deterministic gradient-boosted regression-tree learner.
//!
//! Supports squared-error and Huber objectives, per-iteration row
//! subsampling, per-level column subsampling, sample weights, an optional
//! reflected target, validation-based early stopping, and a
//! self-describing JSON model file. Given identical inputs and seed the
//! trained ensemble is bit-identical at any thread count.

mod encoding;
mod tree;

use std::io;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ColumnKind, FeatureMatrix};

pub use encoding::CategoricalEncoder;
pub use tree::{Node, Tree};

/// Loss functions on the (possibly transformed) target scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    SquaredError,
    Huber { delta: f64 },
}

impl Objective {
    /// Loss as a function of the residual `y - prediction`.
    pub fn loss(&self, residual: f64) -> f64 {
        match self {
            Objective::SquaredError => 0.5 * residual * residual,
            Objective::Huber { delta } => {
                if residual.abs() <= *delta {
                    0.5 * residual * residual
                } else {
                    delta * (residual.abs() - 0.5 * delta)
                }
            }
        }
    }

    /// Derivative of the loss with respect to the residual: the direction a
    /// leaf value should move predictions. For Huber this is the residual
    /// clamped to the delta band.
    pub fn pseudo_gradient(&self, residual: f64) -> f64 {
        match self {
            Objective::SquaredError => residual,
            Objective::Huber { delta } => residual.clamp(-delta, *delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub depth: usize,
    pub l2_leaf_reg: f64,
    /// Fraction of features sampled at each tree level, in (0, 1].
    pub colsample_bylevel: f64,
    /// Fraction of rows sampled (without replacement) per iteration, in
    /// (0, 1].
    pub subsample: f64,
    pub objective: Objective,
    /// Fit on `1 - y` and invert at prediction time.
    pub one_minus_target: bool,
    /// With a validation set: stop after this many rounds without
    /// improvement and keep the best iteration.
    pub early_stopping_rounds: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_estimators: 300,
            learning_rate: 0.1,
            depth: 6,
            l2_leaf_reg: 3.0,
            colsample_bylevel: 1.0,
            subsample: 1.0,
            objective: Objective::SquaredError,
            one_minus_target: false,
            early_stopping_rounds: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training matrix")]
    EmptyMatrix,
    #[error("target length {target} does not match {rows} rows")]
    TargetLength { rows: usize, target: usize },
    #[error("weight length {weights} does not match {rows} rows")]
    WeightLength { rows: usize, weights: usize },
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("weights must be positive and finite (row {0})")]
    BadWeight(usize),
    #[error("categorical column {0:?} must be encoded before training")]
    CategoricalColumn(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("prediction matrix columns do not match the trained manifest: {0}")]
    ManifestMismatch(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Per-iteration losses: weighted training loss, unweighted validation
/// loss when a validation set is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub base_prediction: f64,
    pub trees: Vec<Tree>,
    pub trace: Vec<TraceEntry>,
    /// Set when early stopping truncated the ensemble.
    pub best_iteration: Option<usize>,
    /// Present when the pipeline target-mean-encoded categoricals.
    pub encoder: Option<CategoricalEncoder>,
}

fn validate_config(config: &TrainConfig) -> Result<(), TrainError> {
    if config.depth < 1 {
        return Err(TrainError::BadConfig("depth must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
        return Err(TrainError::BadConfig("learning rate must be in (0, 1]".into()));
    }
    if !(config.subsample > 0.0 && config.subsample <= 1.0) {
        return Err(TrainError::BadConfig("subsample must be in (0, 1]".into()));
    }
    if !(config.colsample_bylevel > 0.0 && config.colsample_bylevel <= 1.0) {
        return Err(TrainError::BadConfig("colsample_bylevel must be in (0, 1]".into()));
    }
    if config.l2_leaf_reg < 0.0 {
        return Err(TrainError::BadConfig("l2_leaf_reg must be non-negative".into()));
    }
    if let Objective::Huber { delta } = config.objective {
        if delta <= 0.0 {
            return Err(TrainError::BadConfig("huber delta must be positive".into()));
        }
    }
    Ok(())
}

/// Weighted mean with an exact shortcut for constant targets, so a
/// constant-target fit reproduces the constant bit-exactly.
fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return first;
    }
    let num: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

fn weighted_loss(objective: &Objective, target: &[f64], preds: &[f64], weights: &[f64]) -> f64 {
    let num: f64 = target
        .iter()
        .zip(preds)
        .zip(weights)
        .map(|((y, p), w)| w * objective.loss(y - p))
        .sum();
    let den: f64 = weights.iter().sum();
    num / den
}

fn unweighted_loss(objective: &Objective, target: &[f64], preds: &[f64]) -> f64 {
    target
        .iter()
        .zip(preds)
        .map(|(y, p)| objective.loss(y - p))
        .sum::<f64>()
        / target.len() as f64
}

/// Fit a boosted ensemble. All matrix columns must be numeric (see
/// [`CategoricalEncoder`] for the categorical path). The optional
/// validation pair drives early stopping and the validation trace;
/// validation targets are transformed alongside the train targets.
pub fn fit(
    matrix: &FeatureMatrix,
    target: &[f64],
    weights: Option<&[f64]>,
    config: &TrainConfig,
    validation: Option<(&FeatureMatrix, &[f64])>,
) -> Result<Ensemble, TrainError> {
    let n = matrix.n_rows();
    if n == 0 || matrix.n_cols() == 0 {
        return Err(TrainError::EmptyMatrix);
    }
    if target.len() != n {
        return Err(TrainError::TargetLength {
            rows: n,
            target: target.len(),
        });
    }
    if let Some(bad) = matrix.manifest().iter().find(|c| c.kind == ColumnKind::Categorical) {
        return Err(TrainError::CategoricalColumn(bad.name.clone()));
    }
    validate_config(config)?;

    let owned_weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(TrainError::WeightLength {
                    rows: n,
                    weights: w.len(),
                });
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    for (i, w) in owned_weights.iter().enumerate() {
        if !w.is_finite() || *w <= 0.0 {
            return Err(TrainError::BadWeight(i));
        }
    }
    if let Some((i, _)) = target.iter().enumerate().find(|(_, y)| !y.is_finite()) {
        return Err(TrainError::NonFiniteTarget(i));
    }

    // Work on the transformed target scale.
    let transform = |y: f64| if config.one_minus_target { 1.0 - y } else { y };
    let t: Vec<f64> = target.iter().map(|y| transform(*y)).collect();
    let validation = validation.map(|(vm, vt)| {
        let vt: Vec<f64> = vt.iter().map(|y| transform(*y)).collect();
        (vm, vt)
    });

    let binned = tree::bin_matrix(matrix, &owned_weights, 256);
    let base_prediction = weighted_mean(&t, &owned_weights);
    let mut preds = vec![base_prediction; n];
    let mut val_preds = validation
        .as_ref()
        .map(|(vm, _)| vec![base_prediction; vm.n_rows()]);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_features = matrix.n_cols();
    let sampled_rows = ((config.subsample * n as f64).ceil() as usize).clamp(1, n);
    let sampled_cols = ((config.colsample_bylevel * n_features as f64).ceil() as usize).clamp(1, n_features);

    let mut trees: Vec<Tree> = Vec::new();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut grad = vec![0.0f64; n];
    let mut best_val = f64::INFINITY;
    let mut best_iteration_seen: usize = 0;
    let mut rounds_since_best: usize = 0;
    let mut stopped_early = false;

    for _ in 0..config.n_estimators {
        let rows: Vec<u32> = if sampled_rows < n {
            let mut picked: Vec<u32> =
                sample_indices(&mut rng, n, sampled_rows).into_iter().map(|i| i as u32).collect();
            picked.sort_unstable();
            picked
        } else {
            (0..n as u32).collect()
        };

        for i in 0..n {
            grad[i] = owned_weights[i] * config.objective.pseudo_gradient(t[i] - preds[i]);
        }

        let feature_sets: Vec<Vec<usize>> = (0..config.depth)
            .map(|_| {
                if sampled_cols < n_features {
                    let mut picked: Vec<usize> =
                        sample_indices(&mut rng, n_features, sampled_cols).into_iter().collect();
                    picked.sort_unstable();
                    picked
                } else {
                    (0..n_features).collect()
                }
            })
            .collect();

        let tree = tree::grow_tree(
            &binned,
            rows,
            &grad,
            &owned_weights,
            &tree::GrowParams {
                depth: config.depth,
                l2_leaf_reg: config.l2_leaf_reg,
            },
            &feature_sets,
        );

        for (i, p) in preds.iter_mut().enumerate() {
            *p += config.learning_rate * tree.predict_row(matrix.row(i));
        }
        if let (Some(vp), Some((vm, _))) = (val_preds.as_mut(), validation.as_ref()) {
            for (i, p) in vp.iter_mut().enumerate() {
                *p += config.learning_rate * tree.predict_row(vm.row(i));
            }
        }
        trees.push(tree);

        let train_loss = weighted_loss(&config.objective, &t, &preds, &owned_weights);
        let validation_loss = match (&val_preds, &validation) {
            (Some(vp), Some((_, vt))) => Some(unweighted_loss(&config.objective, vt, vp)),
            _ => None,
        };
        trace.push(TraceEntry {
            train_loss,
            validation_loss,
        });

        if let (Some(patience), Some(val_loss)) = (config.early_stopping_rounds, validation_loss) {
            if val_loss < best_val {
                best_val = val_loss;
                best_iteration_seen = trees.len() - 1;
                rounds_since_best = 0;
            } else {
                rounds_since_best += 1;
                if rounds_since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let best_iteration = if stopped_early || (config.early_stopping_rounds.is_some() && validation.is_some()) {
        trees.truncate(best_iteration_seen + 1);
        Some(best_iteration_seen)
    } else {
        None
    };

    Ok(Ensemble {
        version: MODEL_FORMAT_VERSION,
        feature_names: matrix.manifest().iter().map(|c| c.name.clone()).collect(),
        config: config.clone(),
        base_prediction,
        trees,
        trace,
        best_iteration,
        encoder: None,
    })
}

impl Ensemble {
    /// Predictions on the original target scale. The matrix manifest must
    /// name the training columns in order.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, TrainError> {
        let names: Vec<&str> = matrix.manifest().iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.feature_names.len()
            || names.iter().zip(&self.feature_names).any(|(a, b)| *a != b.as_str())
        {
            return Err(TrainError::ManifestMismatch(format!(
                "got {} columns, model has {}",
                names.len(),
                self.feature_names.len()
            )));
        }
        Ok((0..matrix.n_rows())
            .map(|r| {
                let raw = self.predict_transformed_row(matrix.row(r));
                if self.config.one_minus_target {
                    1.0 - raw
                } else {
                    raw
                }
            })
            .collect())
    }

    /// Prediction on the internal (transformed) scale.
    fn predict_transformed_row(&self, row: &[f64]) -> f64 {
        let mut p = self.base_prediction;
        for tree in &self.trees {
            p += self.config.learning_rate * tree.predict_row(row);
        }
        p
    }

    /// Total split gain per feature, normalized to sum 1. Empty for an
    /// ensemble that never split.
    pub fn feature_importance(&self) -> std::collections::BTreeMap<String, f64> {
        let mut gains = vec![0.0f64; self.feature_names.len()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    gains[*feature] += gain;
                }
            }
        }
        let total: f64 = gains.iter().sum();
        if total <= 0.0 {
            return Default::default();
        }
        self.feature_names
            .iter()
            .zip(gains)
            .filter(|(_, g)| *g > 0.0)
            .map(|(name, g)| (name.clone(), g / total))
            .collect()
    }

    /// Serialize as versioned JSON. Floating-point values survive the
    /// round trip bit-exactly.
    pub fn save<W: io::Write>(&self, writer: W) -> Result<(), TrainError> {
        serde_json::to_writer(writer, self).map_err(|e| TrainError::ModelFormat(e.to_string()))
    }

    pub fn load<R: io::Read>(reader: R) -> Result<Self, TrainError> {
        let model: Ensemble =
            serde_json::from_reader(reader).map_err(|e| TrainError::ModelFormat(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(TrainError::ModelFormat(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnSpec;
    use approx::assert_abs_diff_eq;

    fn matrix_from_columns(names: &[&str], rows: &[Vec<f64>]) -> FeatureMatrix {
        let manifest: Vec<ColumnSpec> = names.iter().map(|n| ColumnSpec::numeric(*n)).collect();
        let mut m = FeatureMatrix::new(manifest);
        for (i, row) in rows.iter().enumerate() {
            m.push_row(format!("r{i}"), row.clone()).unwrap();
        }
        m
    }

    fn seeded_rows(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
        // Small xorshift so tests do not depend on rand's stream layout.
        let mut state = seed.wrapping_mul(2685821657736338717).max(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n).map(|_| (0..k).map(|_| next() * 10.0 - 5.0).collect()).collect()
    }

    #[test]
    fn constant_target_is_exact() {
        let rows = seeded_rows(50, 3, 7);
        let m = matrix_from_columns(&["a", "b", "c"], &rows);
        let target = vec![0.37; 50];
        let model = fit(&m, &target, None, &TrainConfig::default(), None).unwrap();
        for p in model.predict(&m).unwrap() {
            assert_eq!(p, 0.37);
        }
    }

    #[test]
    fn step_function_fits_exactly_with_one_tree() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
        let target: Vec<f64> = rows.iter().map(|r| if r[0] < 0.0 { 0.0 } else { 1.0 }).collect();
        let m = matrix_from_columns(&["x"], &rows);
        let config = TrainConfig {
            n_estimators: 1,
            learning_rate: 1.0,
            depth: 1,
            l2_leaf_reg: 0.0,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, None, &config, None).unwrap();
        let preds = model.predict(&m).unwrap();
        let mse: f64 =
            preds.iter().zip(&target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / preds.len() as f64;
        assert_abs_diff_eq!(mse, 0.0, epsilon = 1e-24);
    }

    #[test]
    fn huber_pseudo_gradient_examples_and_finite_differences() {
        let objective = Objective::Huber { delta: 1.0 };
        assert_eq!(objective.pseudo_gradient(0.5), 0.5);
        assert_eq!(objective.pseudo_gradient(3.0), 1.0);
        assert_eq!(objective.pseudo_gradient(-3.0), -1.0);

        let h = 1e-6;
        for r in [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0] {
            let fd = (objective.loss(r + h) - objective.loss(r - h)) / (2.0 * h);
            assert_abs_diff_eq!(objective.pseudo_gradient(r), fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn training_loss_non_increasing_with_full_sampling() {
        let rows = seeded_rows(80, 4, 42);
        let target: Vec<f64> = rows
            .iter()
            .map(|r| (r[0] * 0.3 + r[1] * r[1] * 0.05 - r[2] * 0.2).tanh() * 0.5 + 0.5)
            .collect();
        let m = matrix_from_columns(&["a", "b", "c", "d"], &rows);
        for objective in [Objective::SquaredError, Objective::Huber { delta: 1.0 }] {
            let config = TrainConfig {
                n_estimators: 60,
                learning_rate: 0.3,
                depth: 3,
                l2_leaf_reg: 1.0,
                objective,
                ..TrainConfig::default()
            };
            let model = fit(&m, &target, None, &config, None).unwrap();
            for pair in model.trace.windows(2) {
                assert!(
                    pair[1].train_loss <= pair[0].train_loss + 1e-12,
                    "loss increased under {objective:?}: {pair:?}"
                );
            }
        }
    }

    #[test]
    fn determinism_across_identical_runs() {
        let rows = seeded_rows(60, 3, 9);
        let target: Vec<f64> = rows.iter().map(|r| r[0].sin() * 0.5 + 0.5).collect();
        let m = matrix_from_columns(&["a", "b", "c"], &rows);
        let config = TrainConfig {
            n_estimators: 20,
            subsample: 0.7,
            colsample_bylevel: 0.7,
            seed: 11,
            ..TrainConfig::default()
        };
        let m1 = fit(&m, &target, None, &config, None).unwrap();
        let m2 = fit(&m, &target, None, &config, None).unwrap();
        assert_eq!(m1, m2);

        let p1 = m1.predict(&m).unwrap();
        let p2 = m2.predict(&m).unwrap();
        assert_eq!(
            p1.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            p2.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn one_minus_target_inverts_predictions() {
        let rows = seeded_rows(40, 2, 5);
        let target: Vec<f64> = rows.iter().map(|r| (r[0] / 10.0 + 0.5).clamp(0.0, 1.0)).collect();
        let m = matrix_from_columns(&["a", "b"], &rows);
        let config = TrainConfig {
            n_estimators: 40,
            one_minus_target: true,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, None, &config, None).unwrap();
        let preds = model.predict(&m).unwrap();
        // The model fits 1 - y internally but reports on the y scale.
        let mean_error =
            preds.iter().zip(&target).map(|(p, y)| (p - y).abs()).sum::<f64>() / preds.len() as f64;
        assert!(mean_error < 0.1, "mean error {mean_error}");
    }

    #[test]
    fn early_stopping_keeps_best_iteration() {
        let rows = seeded_rows(120, 3, 13);
        let noise = seeded_rows(120, 1, 14);
        let target: Vec<f64> = rows
            .iter()
            .zip(&noise)
            .map(|(r, n)| (r[0] * 0.2).tanh() * 0.5 + 0.5 + n[0] * 0.02)
            .collect();
        let m = matrix_from_columns(&["a", "b", "c"], &rows);
        let train_rows: Vec<usize> = (0..80).collect();
        let val_rows: Vec<usize> = (80..120).collect();
        let train_m = m.select_rows(&train_rows);
        let val_m = m.select_rows(&val_rows);
        let train_t: Vec<f64> = train_rows.iter().map(|&i| target[i]).collect();
        let val_t: Vec<f64> = val_rows.iter().map(|&i| target[i]).collect();

        let config = TrainConfig {
            n_estimators: 400,
            learning_rate: 0.5,
            depth: 4,
            l2_leaf_reg: 0.0,
            early_stopping_rounds: Some(10),
            ..TrainConfig::default()
        };
        let model = fit(&train_m, &train_t, None, &config, Some((&val_m, &val_t))).unwrap();
        let best = model.best_iteration.expect("early stopping engaged");
        assert_eq!(model.trees.len(), best + 1);
        assert!(model.trace.len() >= model.trees.len());
        // The kept iteration has the smallest validation loss in the trace.
        let best_loss = model.trace[best].validation_loss.unwrap();
        for entry in &model.trace {
            assert!(best_loss <= entry.validation_loss.unwrap() + 1e-15);
        }
    }

    #[test]
    fn trace_matches_recomputed_loss() {
        let rows = seeded_rows(70, 3, 17);
        let target: Vec<f64> = rows.iter().map(|r| (r[0] * 0.25).tanh() * 0.5 + 0.5).collect();
        let weights: Vec<f64> = (0..70).map(|i| 0.5 + (i % 5) as f64 * 0.4).collect();
        let m = matrix_from_columns(&["a", "b", "c"], &rows);
        let config = TrainConfig {
            n_estimators: 25,
            depth: 3,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, Some(&weights), &config, None).unwrap();
        let preds = model.predict(&m).unwrap();
        let recomputed = weighted_loss(&config.objective, &target, &preds, &weights);
        let traced = model.trace.last().unwrap().train_loss;
        assert_abs_diff_eq!(recomputed, traced, epsilon = 1e-9);
    }

    #[test]
    fn zero_tree_ensemble_predicts_base() {
        let m = matrix_from_columns(&["a"], &[vec![1.0], vec![2.0]]);
        let target = vec![0.25, 0.75];
        let config = TrainConfig {
            n_estimators: 0,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, None, &config, None).unwrap();
        assert!(model.trees.is_empty());
        assert!(model.feature_importance().is_empty());
        for p in model.predict(&m).unwrap() {
            assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn importance_concentrates_on_duplicated_column() {
        let rows = seeded_rows(100, 1, 21);
        let target: Vec<f64> = rows.iter().map(|r| (r[0] > 0.0) as u8 as f64).collect();
        let single = matrix_from_columns(&["x"], &rows);
        let model_single = fit(&single, &target, None, &TrainConfig::default(), None).unwrap();
        let importance = model_single.feature_importance();
        assert_abs_diff_eq!(importance["x"], 1.0, epsilon = 1e-12);

        // Identical duplicate columns: the tie-break sends every split to
        // the lower index, and the combined share still sums to 1.
        let dup_rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[0]]).collect();
        let dup = matrix_from_columns(&["x1", "x2"], &dup_rows);
        let model_dup = fit(&dup, &target, None, &TrainConfig::default(), None).unwrap();
        let importance = model_dup.feature_importance();
        let combined = importance.get("x1").unwrap_or(&0.0) + importance.get("x2").unwrap_or(&0.0);
        assert_abs_diff_eq!(combined, 1.0, epsilon = 1e-9);
        assert!(!importance.contains_key("x2"), "ties must resolve to the lower index");
    }

    #[test]
    fn weights_shift_the_fit() {
        let m = matrix_from_columns(&["x"], &[vec![0.0], vec![1.0]]);
        let target = vec![0.0, 1.0];
        let config = TrainConfig {
            n_estimators: 0,
            ..TrainConfig::default()
        };
        let balanced = fit(&m, &target, Some(&[1.0, 1.0]), &config, None).unwrap();
        assert_abs_diff_eq!(balanced.base_prediction, 0.5, epsilon = 1e-12);
        let skewed = fit(&m, &target, Some(&[3.0, 1.0]), &config, None).unwrap();
        assert_abs_diff_eq!(skewed.base_prediction, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_row_equivalent_to_double_weight() {
        // No subsampling: duplicating row 0 (adjacent copy) must match
        // giving it weight 2 on the deduplicated data.
        let base_rows = seeded_rows(40, 3, 31);
        let target: Vec<f64> = base_rows.iter().map(|r| (r[0] * 0.4 + r[1] * 0.1).tanh() * 0.5 + 0.5).collect();

        let mut dup_rows = base_rows.clone();
        dup_rows.insert(1, base_rows[0].clone());
        let mut dup_target = target.clone();
        dup_target.insert(1, target[0]);

        let config = TrainConfig {
            n_estimators: 25,
            learning_rate: 0.3,
            depth: 3,
            ..TrainConfig::default()
        };
        let m_dup = matrix_from_columns(&["a", "b", "c"], &dup_rows);
        let model_dup = fit(&m_dup, &dup_target, None, &config, None).unwrap();

        let m_weighted = matrix_from_columns(&["a", "b", "c"], &base_rows);
        let mut weights = vec![1.0; 40];
        weights[0] = 2.0;
        let model_weighted = fit(&m_weighted, &target, Some(&weights), &config, None).unwrap();

        // Identical structure and near-identical predictions; the only
        // permitted difference is summation order inside histogram bins.
        assert_eq!(model_dup.trees.len(), model_weighted.trees.len());
        for (a, b) in model_dup.trees.iter().zip(&model_weighted.trees) {
            assert_eq!(a.nodes.len(), b.nodes.len());
            for (na, nb) in a.nodes.iter().zip(&b.nodes) {
                match (na, nb) {
                    (
                        Node::Split { feature: fa, threshold: ta, .. },
                        Node::Split { feature: fb, threshold: tb, .. },
                    ) => {
                        assert_eq!(fa, fb);
                        assert_eq!(ta, tb);
                    }
                    (Node::Leaf { value: va }, Node::Leaf { value: vb }) => {
                        assert_abs_diff_eq!(va, vb, epsilon = 1e-9);
                    }
                    other => panic!("structure mismatch: {other:?}"),
                }
            }
        }
        let probe = matrix_from_columns(&["a", "b", "c"], &seeded_rows(20, 3, 77));
        let pd = model_dup.predict(&probe).unwrap();
        let pw = model_weighted.predict(&probe).unwrap();
        for (a, b) in pd.iter().zip(&pw) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn missing_values_are_routed_and_finite() {
        use crate::MISSING;
        // Feature informative when present; a block of rows is missing.
        let mut rows = seeded_rows(60, 2, 51);
        for row in rows.iter_mut().take(15) {
            row[0] = MISSING;
        }
        let target: Vec<f64> = rows
            .iter()
            .map(|r| {
                if crate::is_missing(r[0]) {
                    0.9
                } else if r[0] > 0.0 {
                    0.7
                } else {
                    0.2
                }
            })
            .collect();
        let m = matrix_from_columns(&["a", "b"], &rows);
        let config = TrainConfig {
            n_estimators: 50,
            depth: 3,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, None, &config, None).unwrap();
        let preds = model.predict(&m).unwrap();
        assert!(preds.iter().all(|p| p.is_finite()));
        // Missing rows should be recovered near their own level.
        let missing_mean: f64 = preds[..15].iter().sum::<f64>() / 15.0;
        assert!((missing_mean - 0.9).abs() < 0.05, "missing rows predicted {missing_mean}");
    }

    #[test]
    fn serialization_roundtrip_is_bit_exact() {
        let rows = seeded_rows(50, 3, 61);
        let target: Vec<f64> = rows.iter().map(|r| (r[0] * 0.17).tanh() * 0.5 + 0.5).collect();
        let m = matrix_from_columns(&["a", "b", "c"], &rows);
        let config = TrainConfig {
            n_estimators: 15,
            subsample: 0.8,
            colsample_bylevel: 0.9,
            objective: Objective::Huber { delta: 1.0 },
            one_minus_target: true,
            ..TrainConfig::default()
        };
        let model = fit(&m, &target, None, &config, None).unwrap();

        let mut buffer = Vec::new();
        model.save(&mut buffer).unwrap();
        let loaded = Ensemble::load(buffer.as_slice()).unwrap();
        assert_eq!(model, loaded);

        let original = model.predict(&m).unwrap();
        let reloaded = loaded.predict(&m).unwrap();
        assert_eq!(
            original.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            reloaded.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn predict_rejects_manifest_mismatch() {
        let m = matrix_from_columns(&["a", "b"], &[vec![1.0, 2.0]]);
        let model = fit(&m, &[0.5], None, &TrainConfig { n_estimators: 0, ..Default::default() }, None).unwrap();
        let other = matrix_from_columns(&["a", "z"], &[vec![1.0, 2.0]]);
        assert!(matches!(
            model.predict(&other),
            Err(TrainError::ManifestMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        let m = matrix_from_columns(&["a"], &[vec![1.0]]);
        let bad = TrainConfig { depth: 0, ..TrainConfig::default() };
        assert!(matches!(fit(&m, &[0.5], None, &bad, None), Err(TrainError::BadConfig(_))));
        let bad = TrainConfig { subsample: 0.0, ..TrainConfig::default() };
        assert!(matches!(fit(&m, &[0.5], None, &bad, None), Err(TrainError::BadConfig(_))));
        let bad = TrainConfig {
            objective: Objective::Huber { delta: 0.0 },
            ..TrainConfig::default()
        };
        assert!(matches!(fit(&m, &[0.5], None, &bad, None), Err(TrainError::BadConfig(_))));
        assert!(matches!(
            fit(&m, &[f64::NAN], None, &TrainConfig::default(), None),
            Err(TrainError::NonFiniteTarget(0))
        ));
    }
}
