//! Metrics, stratified splitting, random hyperparameter search, and
//! city-/bin-level reporting.
//!
//! Targets and predictions live in [0, 1] and are scored on a 0-100 scale:
//! MAPE is the mean absolute error of the percentage values, and coverage
//! P_theta the share of cells within theta percentage points.

use std::collections::BTreeMap;
use std::io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, Split};
use crate::regressor::{Objective, TrainConfig};

/// Default coverage threshold, in percentage points.
pub const DEFAULT_THETA: f64 = 6.0;

/// Default target-bin edges for stratification and bin reports.
pub const DEFAULT_TARGET_BIN_EDGES: [f64; 6] = [0.0, 0.5, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("theta must be within [0, 100], got {0}")]
    BadTheta(f64),
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("search needs at least one trial")]
    NoTrials,
    #[error("{0}")]
    Other(String),
}

/// Mean absolute percentage error on the 0-100 scale.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64, EvalError> {
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y.len(), y_hat.len()));
    }
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (100.0 * a - 100.0 * b).abs()).sum();
    Ok(sum / y.len() as f64)
}

/// Percentage of instances with absolute error (0-100 scale) no greater
/// than `theta`.
pub fn coverage(y: &[f64], y_hat: &[f64], theta: f64) -> Result<f64, EvalError> {
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y.len(), y_hat.len()));
    }
    if !(0.0..=100.0).contains(&theta) {
        return Err(EvalError::BadTheta(theta));
    }
    let within = y
        .iter()
        .zip(y_hat)
        .filter(|(a, b)| (100.0 * **a - 100.0 * **b).abs() <= theta)
        .count();
    Ok(100.0 * within as f64 / y.len() as f64)
}

/// Target bins: `[e0, e1]` closed for the first bin, `(e_i, e_{i+1}]` after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBins {
    pub edges: Vec<f64>,
}

impl Default for TargetBins {
    fn default() -> Self {
        TargetBins {
            edges: DEFAULT_TARGET_BIN_EDGES.to_vec(),
        }
    }
}

impl TargetBins {
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin index of a value; values at or below the first edge fall into
    /// bin 0, values above the last edge clamp into the final bin.
    pub fn bin_of(&self, value: f64) -> usize {
        for b in 0..self.n_bins() {
            if value <= self.edges[b + 1] {
                return b;
            }
        }
        self.n_bins() - 1
    }

    /// Row label like `(0.8, 0.9]`; the first bin prints closed.
    pub fn label(&self, bin: usize) -> String {
        let lo = self.edges[bin];
        let hi = self.edges[bin + 1];
        if bin == 0 {
            format!("[{lo}, {hi}]")
        } else {
            format!("({lo}, {hi}]")
        }
    }
}

/// Stratified k-fold assignment: per-bin proportional allocation with fold
/// sizes within each bin differing by at most one. Returns one fold id per
/// target plus warnings for bins thinner than k.
pub fn stratified_kfold(
    targets: &[f64],
    k: usize,
    bins: &TargetBins,
    seed: u64,
) -> Result<(Vec<usize>, Vec<String>), EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    if targets.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; targets.len()];
    let mut warnings = Vec::new();

    let mut per_bin: Vec<Vec<usize>> = vec![Vec::new(); bins.n_bins()];
    for (i, t) in targets.iter().enumerate() {
        per_bin[bins.bin_of(*t)].push(i);
    }

    for (b, members) in per_bin.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            warnings.push(format!(
                "bin {} has {} samples for {k} folds; allocating round-robin",
                bins.label(b),
                members.len()
            ));
        }
        let mut shuffled = members.clone();
        // Fisher-Yates with the shared rng keeps folds reproducible.
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        // Rotate the starting fold per bin so remainders spread out.
        let start = b % k;
        for (pos, &sample) in shuffled.iter().enumerate() {
            assignment[sample] = (start + pos) % k;
        }
    }
    Ok((assignment, warnings))
}

/// Value range for one searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    /// Sample `exp(uniform(ln lo, ln hi))` instead of `uniform(lo, hi)`.
    pub log_scale: bool,
}

impl ParamRange {
    pub fn linear(lo: f64, hi: f64) -> Self {
        ParamRange {
            lo,
            hi,
            log_scale: false,
        }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        ParamRange {
            lo,
            hi,
            log_scale: true,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.log_scale {
            let u = rng.random_range(self.lo.ln()..=self.hi.ln());
            u.exp()
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Random-search space over the supported training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    pub depth: (usize, usize),
    pub learning_rate: ParamRange,
    pub l2_leaf_reg: ParamRange,
    pub colsample_bylevel: ParamRange,
    pub subsample: ParamRange,
    /// Candidate objectives, sampled uniformly.
    pub objectives: Vec<Objective>,
    pub one_minus_target: Vec<bool>,
    pub early_stopping_rounds: Option<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_estimators: (250, 3000),
            depth: (4, 10),
            learning_rate: ParamRange::log(1e-4, 1.0),
            l2_leaf_reg: ParamRange::linear(0.0, 10.0),
            colsample_bylevel: ParamRange::log(0.01, 1.0),
            subsample: ParamRange::log(0.1, 1.0),
            objectives: vec![Objective::SquaredError, Objective::Huber { delta: 1.0 }],
            one_minus_target: vec![false],
            early_stopping_rounds: None,
        }
    }
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut ChaCha8Rng, seed: u64) -> TrainConfig {
        let objective = self.objectives[rng.random_range(0..self.objectives.len())];
        let one_minus = self.one_minus_target[rng.random_range(0..self.one_minus_target.len())];
        TrainConfig {
            n_estimators: rng.random_range(self.n_estimators.0..=self.n_estimators.1),
            depth: rng.random_range(self.depth.0..=self.depth.1),
            learning_rate: self.learning_rate.sample(rng),
            l2_leaf_reg: self.l2_leaf_reg.sample(rng),
            colsample_bylevel: self.colsample_bylevel.sample(rng).min(1.0),
            subsample: self.subsample.sample(rng).min(1.0),
            objective,
            one_minus_target: one_minus,
            early_stopping_rounds: self.early_stopping_rounds,
            seed,
        }
    }
}

/// One evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// Mean validation MAPE across folds (or the single validation set).
    pub score: f64,
}

/// Search result: the best configuration plus the full log in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// Random hyperparameter search: samples `trials` configurations and ranks
/// them by the supplied evaluation closure (mean validation MAPE).
/// Non-finite scores disqualify a trial.
pub fn random_search<F>(
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    mut evaluate: F,
) -> Result<SearchResult, EvalError>
where
    F: FnMut(usize, &TrainConfig) -> Result<f64, String>,
{
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::with_capacity(trials);
    for index in 0..trials {
        let config = space.sample(&mut rng, seed);
        let score = evaluate(index, &config).map_err(EvalError::Other)?;
        log.push(Trial {
            index,
            config,
            score,
        });
    }
    let best = log
        .iter()
        .filter(|t| t.score.is_finite())
        .min_by(|a, b| a.score.partial_cmp(&b.score).unwrap())
        .cloned()
        .ok_or_else(|| EvalError::Other("no trial produced a finite score".into()))?;
    Ok(SearchResult { best, trials: log })
}

/// Serialize a search log: one line per trial with the sampled
/// configuration and its validation score.
pub fn write_trial_log<W: io::Write>(writer: &mut W, result: &SearchResult) -> io::Result<()> {
    writeln!(writer, "trial,score,is_best,config")?;
    for trial in &result.trials {
        let config = serde_json::to_string(&trial.config).map_err(io::Error::other)?;
        writeln!(
            writer,
            "{},{},{},{config:?}",
            trial.index,
            trial.score,
            trial.index == result.best.index
        )?;
    }
    Ok(())
}

/// Mean validation MAPE of one configuration under repeated stratified
/// k-fold cross validation: `repetitions` independent fold assignments
/// (seeded from `seed`), each fold held out once.
pub fn cross_validate_config(
    matrix: &crate::features::FeatureMatrix,
    target: &[f64],
    weights: Option<&[f64]>,
    config: &TrainConfig,
    k: usize,
    repetitions: usize,
    bins: &TargetBins,
    seed: u64,
) -> Result<f64, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::Other("need at least one repetition".into()));
    }
    let mut fold_scores = Vec::new();
    for repetition in 0..repetitions {
        let (assignment, _) = stratified_kfold(target, k, bins, seed.wrapping_add(repetition as u64))?;
        for fold in 0..k {
            let train_rows: Vec<usize> = (0..target.len()).filter(|i| assignment[*i] != fold).collect();
            let held_rows: Vec<usize> = (0..target.len()).filter(|i| assignment[*i] == fold).collect();
            if train_rows.is_empty() || held_rows.is_empty() {
                continue;
            }
            let train_matrix = matrix.select_rows(&train_rows);
            let held_matrix = matrix.select_rows(&held_rows);
            let train_target: Vec<f64> = train_rows.iter().map(|&i| target[i]).collect();
            let held_target: Vec<f64> = held_rows.iter().map(|&i| target[i]).collect();
            let fold_weights: Option<Vec<f64>> =
                weights.map(|w| train_rows.iter().map(|&i| w[i]).collect());

            let model = crate::regressor::fit(
                &train_matrix,
                &train_target,
                fold_weights.as_deref(),
                config,
                None,
            )
            .map_err(|e| EvalError::Other(e.to_string()))?;
            let predictions = model
                .predict(&held_matrix)
                .map_err(|e| EvalError::Other(e.to_string()))?;
            fold_scores.push(mape(&held_target, &predictions)?);
        }
    }
    if fold_scores.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(fold_scores.iter().sum::<f64>() / fold_scores.len() as f64)
}

/// One report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scope: String,
    pub instances: usize,
    pub mape: f64,
    pub p_theta: f64,
}

/// The evaluation report: combined train/test rows, city-operator rows,
/// and per-bin rows for each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub theta: f64,
    pub rows: Vec<ReportRow>,
    /// Scopes skipped for having no instances.
    pub notes: Vec<String>,
}

fn scoped_row(scope: String, y: &[f64], y_hat: &[f64], theta: f64) -> ReportRow {
    ReportRow {
        scope,
        instances: y.len(),
        mape: mape(y, y_hat).expect("non-empty scope"),
        p_theta: coverage(y, y_hat, theta).expect("non-empty scope"),
    }
}

/// Build the report over cells with predictions. `predictions` and
/// `targets` are keyed by cell name; cells present in only one of the two
/// maps are ignored.
pub fn report(
    dataset: &Dataset,
    targets: &BTreeMap<String, f64>,
    predictions: &BTreeMap<String, f64>,
    theta: f64,
    bins: &TargetBins,
) -> Result<EvalReport, EvalError> {
    if !(0.0..=100.0).contains(&theta) {
        return Err(EvalError::BadTheta(theta));
    }

    struct ScopeAcc {
        y: Vec<f64>,
        y_hat: Vec<f64>,
    }
    impl ScopeAcc {
        fn new() -> Self {
            ScopeAcc {
                y: Vec::new(),
                y_hat: Vec::new(),
            }
        }
        fn push(&mut self, y: f64, y_hat: f64) {
            self.y.push(y);
            self.y_hat.push(y_hat);
        }
    }

    let mut combined: BTreeMap<String, ScopeAcc> = BTreeMap::new();
    let mut city_ops: BTreeMap<String, ScopeAcc> = BTreeMap::new();
    let mut bin_scopes: BTreeMap<(String, usize), ScopeAcc> = BTreeMap::new();

    let mut matched = 0usize;
    for record in &dataset.records {
        let (Some(&y), Some(&y_hat)) = (targets.get(&record.cell_name), predictions.get(&record.cell_name))
        else {
            continue;
        };
        matched += 1;
        let split = dataset.split_of(record).to_string();
        combined.entry(split.clone()).or_insert_with(ScopeAcc::new).push(y, y_hat);
        city_ops
            .entry(record.city_operator())
            .or_insert_with(ScopeAcc::new)
            .push(y, y_hat);
        bin_scopes
            .entry((split, bins.bin_of(y)))
            .or_insert_with(ScopeAcc::new)
            .push(y, y_hat);
    }
    if matched == 0 {
        return Err(EvalError::Empty);
    }

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for split in [Split::Train, Split::Test] {
        match combined.get(&split.to_string()) {
            Some(acc) => rows.push(scoped_row(format!("combined_{split}"), &acc.y, &acc.y_hat, theta)),
            None => notes.push(format!("no instances in combined_{split}")),
        }
    }
    for (key, acc) in &city_ops {
        rows.push(scoped_row(key.clone(), &acc.y, &acc.y_hat, theta));
    }
    for split in [Split::Train, Split::Test] {
        // Bins reported highest-first to mirror the combined tables.
        for b in (0..bins.n_bins()).rev() {
            match bin_scopes.get(&(split.to_string(), b)) {
                Some(acc) => rows.push(scoped_row(
                    format!("{split}_bin_{}", bins.label(b)),
                    &acc.y,
                    &acc.y_hat,
                    theta,
                )),
                None => notes.push(format!("no instances in {split} bin {}", bins.label(b))),
            }
        }
    }

    Ok(EvalReport { theta, rows, notes })
}

impl EvalReport {
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), io::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scope", "instances", "mape", "p_theta"])
            .map_err(io::Error::other)?;
        for row in &self.rows {
            w.write_record([
                row.scope.clone(),
                row.instances.to_string(),
                format!("{:.4}", row.mape),
                format!("{:.2}", row.p_theta),
            ])
            .map_err(io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }
}
