//! File-based pipeline stages: ingest, kpi, neighbors, features, weights,
//! train, evaluate, plus the synthetic-data producer. Each stage reads and
//! writes only its declared files under the configured directories, so a
//! resolved configuration fully determines a run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data_model::{
    build_dataset, filter_eligible, parse_cells, parse_split_manifest, write_cells, Dataset, Split,
};
use crate::evaluation::{report, EvalReport, TargetBins, DEFAULT_THETA};
use crate::features::{
    assemble_with_neighborhoods, build_manifest, land_use::parse_land_use, Aggregate,
    AssembledFeatures, FeatureConfig, FeatureMatrix, LandUseMap, ManifestFile,
};
use crate::kpi::{kpi_batch, parse_slots_table, parse_throughput_table, DEFAULT_BIN_EDGES, DEFAULT_X_MBPS};
use crate::regressor::{fit, CategoricalEncoder, Ensemble, Objective, TrainConfig};
use crate::spatial::{compute_neighborhoods, neighbor_edges};
use crate::synth::{self, SynthConfig};
use crate::weighting::{lds_weights, LdsConfig};

/// Artifact file names.
pub mod artifacts {
    pub const CELLS_VALIDATED: &str = "cells_validated.csv";
    pub const KPI: &str = "kpi.csv";
    pub const KPI_EXCLUDED: &str = "kpi_excluded.csv";
    pub const NEIGHBORS: &str = "neighbors.csv";
    pub const FEATURES: &str = "features.csv";
    pub const MANIFEST: &str = "features.manifest.json";
    pub const TARGETS: &str = "targets.csv";
    pub const WEIGHTS: &str = "weights.csv";
    pub const MODEL: &str = "model.json";
    pub const TRACE: &str = "trace.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const REPORT: &str = "report.csv";
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Message(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    fn msg(m: impl Into<String>) -> Self {
        PipelineError::Message(m.into())
    }
}

impl From<crate::data_model::DataError> for PipelineError {
    fn from(e: crate::data_model::DataError) -> Self {
        PipelineError::Message(e.to_string())
    }
}

impl From<crate::features::FeatureError> for PipelineError {
    fn from(e: crate::features::FeatureError) -> Self {
        PipelineError::Message(e.to_string())
    }
}

impl From<crate::regressor::TrainError> for PipelineError {
    fn from(e: crate::regressor::TrainError) -> Self {
        PipelineError::Message(e.to_string())
    }
}

/// Which rows serve as the early-stopping validation set during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    None,
    /// Use the held-out test cities as the validation set.
    Test,
}

/// One resolved run configuration. Defaults overridden by a flat key=value
/// file, then by command-line flags.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Input directory: cells.csv, split.csv, throughput.csv, slots.csv,
    /// landuse.grid.
    pub data_dir: PathBuf,
    /// Output directory for all artifacts.
    pub out_dir: PathBuf,
    pub x_mbps: f64,
    pub theta: f64,
    pub seed: u64,
    /// 0 means machine parallelism.
    pub threads: usize,
    pub scene_radii: [f64; 3],
    pub comparison_aggregates: Vec<Aggregate>,
    pub lds_enabled: bool,
    pub lds: LdsConfig,
    pub train: TrainConfig,
    pub validation: ValidationMode,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            x_mbps: DEFAULT_X_MBPS,
            theta: DEFAULT_THETA,
            seed: 0,
            threads: 0,
            scene_radii: [300.0, 1000.0, 3000.0],
            comparison_aggregates: vec![Aggregate::Mean, Aggregate::Median],
            lds_enabled: true,
            lds: LdsConfig::default(),
            train: TrainConfig {
                n_estimators: 400,
                learning_rate: 0.08,
                depth: 6,
                l2_leaf_reg: 3.0,
                colsample_bylevel: 0.9,
                subsample: 0.9,
                objective: Objective::SquaredError,
                one_minus_target: false,
                early_stopping_rounds: None,
                seed: 0,
            },
            validation: ValidationMode::None,
            synth: SynthConfig::default(),
        }
    }
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse::<T>()
        .map_err(|_| PipelineError::msg(format!("bad value {value:?} for key {key:?}")))
}

impl PipelineConfig {
    /// Apply one key=value override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "x" => self.x_mbps = parse_key(key, value)?,
            "theta" => self.theta = parse_key(key, value)?,
            "seed" => {
                self.seed = parse_key(key, value)?;
                self.train.seed = self.seed;
                self.synth.seed = self.seed;
            }
            "threads" => self.threads = parse_key(key, value)?,
            "scene_near_m" => self.scene_radii[0] = parse_key(key, value)?,
            "scene_quasi_near_m" => self.scene_radii[1] = parse_key(key, value)?,
            "scene_far_m" => self.scene_radii[2] = parse_key(key, value)?,
            "comparison_aggregates" => {
                let mut aggregates = Vec::new();
                for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    aggregates.push(match part {
                        "mean" => Aggregate::Mean,
                        "median" => Aggregate::Median,
                        "max" => Aggregate::Max,
                        "p25" => Aggregate::P25,
                        "p75" => Aggregate::P75,
                        other => {
                            return Err(PipelineError::msg(format!("unknown aggregate {other:?}")))
                        }
                    });
                }
                self.comparison_aggregates = aggregates;
            }
            "lds_enabled" => self.lds_enabled = parse_key(key, value)?,
            "lds_bins" => self.lds.n_bins = parse_key(key, value)?,
            "lds_kernel_length" => self.lds.kernel_length = parse_key(key, value)?,
            "lds_sigma" => self.lds.sigma = parse_key(key, value)?,
            "train_n_estimators" => self.train.n_estimators = parse_key(key, value)?,
            "train_learning_rate" => self.train.learning_rate = parse_key(key, value)?,
            "train_depth" => self.train.depth = parse_key(key, value)?,
            "train_l2_leaf_reg" => self.train.l2_leaf_reg = parse_key(key, value)?,
            "train_colsample_bylevel" => self.train.colsample_bylevel = parse_key(key, value)?,
            "train_subsample" => self.train.subsample = parse_key(key, value)?,
            "train_objective" => {
                self.train.objective = match value {
                    "rmse" | "squared_error" => Objective::SquaredError,
                    "huber" => Objective::Huber { delta: 1.0 },
                    other => return Err(PipelineError::msg(format!("unknown objective {other:?}"))),
                }
            }
            "train_huber_delta" => {
                let delta = parse_key(key, value)?;
                self.train.objective = Objective::Huber { delta };
            }
            "train_one_minus_target" => self.train.one_minus_target = parse_key(key, value)?,
            "train_early_stopping_rounds" => {
                let rounds: usize = parse_key(key, value)?;
                self.train.early_stopping_rounds = if rounds == 0 { None } else { Some(rounds) };
            }
            "train_validation" => {
                self.validation = match value {
                    "none" => ValidationMode::None,
                    "test" => ValidationMode::Test,
                    other => return Err(PipelineError::msg(format!("unknown validation {other:?}"))),
                }
            }
            "synth_n_cities" => self.synth.n_cities = parse_key(key, value)?,
            "synth_sites_per_city" => self.synth.sites_per_city = parse_key(key, value)?,
            "synth_sectors_per_site" => self.synth.sectors_per_site = parse_key(key, value)?,
            "synth_pitch_m" => self.synth.pitch_m = parse_key(key, value)?,
            "synth_n_test_cities" => self.synth.n_test_cities = parse_key(key, value)?,
            "synth_quality_noise" => self.synth.quality_noise = parse_key(key, value)?,
            other => return Err(PipelineError::msg(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Load `key = value` lines (# comments, blank lines ignored) over the
    /// defaults.
    pub fn load_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let text = std::fs::read_to_string(path)?;
        for (line_number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::msg(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    line_number + 1
                )));
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The full resolved configuration as sorted key=value pairs, for run
    /// logging.
    pub fn resolved_pairs(&self) -> Vec<(String, String)> {
        let objective = match self.train.objective {
            Objective::SquaredError => ("rmse".to_string(), String::new()),
            Objective::Huber { delta } => ("huber".to_string(), format!("{delta}")),
        };
        let aggregates: Vec<&str> = self
            .comparison_aggregates
            .iter()
            .map(|a| a.label())
            .collect();
        let mut pairs = vec![
            ("comparison_aggregates".into(), aggregates.join(",")),
            ("data_dir".into(), self.data_dir.display().to_string()),
            ("lds_bins".into(), self.lds.n_bins.to_string()),
            ("lds_enabled".into(), self.lds_enabled.to_string()),
            ("lds_kernel_length".into(), self.lds.kernel_length.to_string()),
            ("lds_sigma".into(), self.lds.sigma.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
            ("scene_far_m".into(), self.scene_radii[2].to_string()),
            ("scene_near_m".into(), self.scene_radii[0].to_string()),
            ("scene_quasi_near_m".into(), self.scene_radii[1].to_string()),
            ("seed".into(), self.seed.to_string()),
            ("synth_n_cities".into(), self.synth.n_cities.to_string()),
            ("synth_n_test_cities".into(), self.synth.n_test_cities.to_string()),
            ("synth_pitch_m".into(), self.synth.pitch_m.to_string()),
            ("synth_quality_noise".into(), self.synth.quality_noise.to_string()),
            ("synth_sectors_per_site".into(), self.synth.sectors_per_site.to_string()),
            ("synth_sites_per_city".into(), self.synth.sites_per_city.to_string()),
            ("theta".into(), self.theta.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("train_colsample_bylevel".into(), self.train.colsample_bylevel.to_string()),
            ("train_depth".into(), self.train.depth.to_string()),
            (
                "train_early_stopping_rounds".into(),
                self.train.early_stopping_rounds.unwrap_or(0).to_string(),
            ),
            ("train_l2_leaf_reg".into(), self.train.l2_leaf_reg.to_string()),
            ("train_learning_rate".into(), self.train.learning_rate.to_string()),
            ("train_n_estimators".into(), self.train.n_estimators.to_string()),
            ("train_objective".into(), objective.0),
            ("train_one_minus_target".into(), self.train.one_minus_target.to_string()),
            ("train_subsample".into(), self.train.subsample.to_string()),
            (
                "train_validation".into(),
                match self.validation {
                    ValidationMode::None => "none".into(),
                    ValidationMode::Test => "test".into(),
                },
            ),
            ("x".into(), self.x_mbps.to_string()),
        ];
        if !objective.1.is_empty() {
            pairs.push(("train_huber_delta".into(), objective.1));
        }
        pairs.sort();
        pairs
    }

    fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            scene_radii: self.scene_radii,
            comparison_aggregates: self.comparison_aggregates.clone(),
        }
    }

    fn data_path(&self, name: &str) -> PathBuf {
        self.data_dir.join(name)
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::msg(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::msg(format!("cannot create {}: {e}", path.display())))
}

fn load_dataset(config: &PipelineConfig) -> Result<Dataset, PipelineError> {
    let records = parse_cells(&config.data_path(synth::files::CELLS))?;
    let splits = parse_split_manifest(open(&config.data_path(synth::files::SPLIT))?)?;
    Ok(build_dataset(records, splits))
}

fn load_targets(config: &PipelineConfig) -> Result<BTreeMap<String, f64>, PipelineError> {
    let mut reader = csv::Reader::from_reader(open(&config.out_path(artifacts::TARGETS))?);
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| PipelineError::msg(e.to_string()))?;
        let name = row.get(0).unwrap_or("").to_string();
        let value: f64 = row
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| PipelineError::msg(format!("bad target for {name:?}")))?;
        out.insert(name, value);
    }
    Ok(out)
}

fn load_matrix(config: &PipelineConfig) -> Result<FeatureMatrix, PipelineError> {
    let manifest = ManifestFile::read(open(&config.out_path(artifacts::MANIFEST))?)
        .map_err(|e| PipelineError::msg(e.to_string()))?;
    FeatureMatrix::read_csv(open(&config.out_path(artifacts::FEATURES))?, manifest.columns)
        .map_err(|e| PipelineError::msg(e.to_string()))
}

/// Generate synthetic inputs into the data directory.
pub fn stage_synth(config: &PipelineConfig) -> Result<(), PipelineError> {
    let output = synth::generate(&config.synth);
    synth::write_synth_files(&output, &config.data_dir)?;
    println!(
        "synth: {} cells across {} city-operators into {}",
        output.dataset.len(),
        output.dataset.splits.len(),
        config.data_dir.display()
    );
    Ok(())
}

/// Parse, validate, and echo the cells table; report filter counts.
pub fn stage_ingest(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let (eligible, dropped) = filter_eligible(&dataset);
    let mut writer = create(&config.out_path(artifacts::CELLS_VALIDATED))?;
    write_cells(&mut writer, &dataset.records)?;
    writer.flush()?;
    println!(
        "ingest: {} cells validated, {} eligible (>= 20% PRB usage), {} below threshold",
        dataset.len(),
        eligible.len(),
        dropped
    );
    if eligible.is_empty() {
        eprintln!("warning: no cells meet the eligibility threshold");
    }
    Ok(())
}

/// Compute the KPI per cell from the throughput and slots tables.
pub fn stage_kpi(config: &PipelineConfig) -> Result<(), PipelineError> {
    let distributions = parse_throughput_table(
        open(&config.data_path(synth::files::THROUGHPUT))?,
        &DEFAULT_BIN_EDGES,
    )
    .map_err(PipelineError::msg)?;
    let slots =
        parse_slots_table(open(&config.data_path(synth::files::SLOTS))?).map_err(PipelineError::msg)?;
    let (values, exclusions) = kpi_batch(&distributions, &slots, config.x_mbps);

    let mut writer = create(&config.out_path(artifacts::KPI))?;
    writeln!(writer, "cell_name,x_mbps,y")?;
    for (name, value) in &values {
        writeln!(writer, "{name},{},{}", value.x, value.y)?;
    }
    writer.flush()?;

    let mut excluded = create(&config.out_path(artifacts::KPI_EXCLUDED))?;
    writeln!(excluded, "cell_name,reason")?;
    for exclusion in &exclusions {
        writeln!(excluded, "{},{}", exclusion.cell_name, exclusion.reason)?;
    }
    excluded.flush()?;

    println!("kpi: {} values at x = {} Mbps, {} excluded", values.len(), config.x_mbps, exclusions.len());
    Ok(())
}

/// Export the neighbor/interferer edges for map plotting.
pub fn stage_neighbors(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let map = compute_neighborhoods(&dataset);
    let edges = neighbor_edges(&dataset, &map);

    let mut writer = create(&config.out_path(artifacts::NEIGHBORS))?;
    writeln!(writer, "cell_name,neighbor_name,distance_m,bearing_deg,is_interferer,rule")?;
    for e in &edges {
        writeln!(
            writer,
            "{},{},{:.3},{:.3},{},{}",
            e.cell_name, e.neighbor_name, e.distance_m, e.bearing_deg, e.is_interferer, e.rule
        )?;
    }
    writer.flush()?;
    println!("neighbors: {} edges for {} cells", edges.len(), dataset.len());
    Ok(())
}

/// Assemble the feature matrix and aligned targets.
pub fn stage_features(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let land_use: LandUseMap =
        parse_land_use(open(&config.data_path(synth::files::LAND_USE))?).map_err(PipelineError::msg)?;

    let mut kpi_map = BTreeMap::new();
    let mut reader = csv::Reader::from_reader(open(&config.out_path(artifacts::KPI))?);
    for row in reader.records() {
        let row = row.map_err(|e| PipelineError::msg(e.to_string()))?;
        let name = row.get(0).unwrap_or("").to_string();
        let x: f64 = row.get(1).unwrap_or("").parse().unwrap_or(config.x_mbps);
        let y: f64 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| PipelineError::msg(format!("bad kpi row for {name:?}")))?;
        kpi_map.insert(name, crate::kpi::KpiValue { y, x });
    }

    let neighborhoods = compute_neighborhoods(&dataset);
    let assembled: AssembledFeatures = assemble_with_neighborhoods(
        &dataset,
        &neighborhoods,
        &kpi_map,
        &land_use,
        &config.feature_config(),
    )?;

    ManifestFile {
        columns: build_manifest(&config.feature_config()),
    }
    .write(create(&config.out_path(artifacts::MANIFEST))?)
    .map_err(|e| PipelineError::msg(e.to_string()))?;
    assembled
        .matrix
        .write_csv(create(&config.out_path(artifacts::FEATURES))?)
        .map_err(|e| PipelineError::msg(e.to_string()))?;

    let mut targets = create(&config.out_path(artifacts::TARGETS))?;
    writeln!(targets, "cell_name,target")?;
    for (key, y) in assembled.matrix.row_keys().iter().zip(&assembled.target) {
        writeln!(targets, "{key},{y}")?;
    }
    targets.flush()?;

    println!(
        "features: {} rows x {} columns, {} eligible cells skipped without KPI",
        assembled.matrix.n_rows(),
        assembled.matrix.n_cols(),
        assembled.skipped_no_kpi.len()
    );
    Ok(())
}

/// Label-distribution-smoothing weights over the train-split targets.
pub fn stage_weights(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let targets = load_targets(config)?;
    let split_of: BTreeMap<&str, Split> = dataset
        .records
        .iter()
        .map(|r| (r.cell_name.as_str(), dataset.split_of(r)))
        .collect();

    let mut train_names = Vec::new();
    let mut train_targets = Vec::new();
    for (name, y) in &targets {
        if split_of.get(name.as_str()) == Some(&Split::Train) {
            train_names.push(name.clone());
            train_targets.push(*y);
        }
    }
    if train_targets.is_empty() {
        return Err(PipelineError::msg("no train-split targets to weight"));
    }

    let weights = if config.lds_enabled {
        lds_weights(&train_targets, &config.lds).map_err(|e| PipelineError::msg(e.to_string()))?
    } else {
        vec![1.0; train_targets.len()]
    };

    let mut writer = create(&config.out_path(artifacts::WEIGHTS))?;
    writeln!(writer, "cell_name,weight")?;
    for (name, w) in train_names.iter().zip(&weights) {
        writeln!(writer, "{name},{w}")?;
    }
    writer.flush()?;
    println!("weights: {} train cells weighted (lds_enabled = {})", weights.len(), config.lds_enabled);
    Ok(())
}

/// Train the boosted ensemble on the train split.
pub fn stage_train(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let matrix = load_matrix(config)?;
    let targets = load_targets(config)?;

    let mut weight_map: BTreeMap<String, f64> = BTreeMap::new();
    let weights_path = config.out_path(artifacts::WEIGHTS);
    if weights_path.exists() {
        let mut reader = csv::Reader::from_reader(open(&weights_path)?);
        for row in reader.records() {
            let row = row.map_err(|e| PipelineError::msg(e.to_string()))?;
            let name = row.get(0).unwrap_or("").to_string();
            let w: f64 = row
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| PipelineError::msg(format!("bad weight for {name:?}")))?;
            weight_map.insert(name, w);
        }
    }

    let split_of: BTreeMap<&str, Split> = dataset
        .records
        .iter()
        .map(|r| (r.cell_name.as_str(), dataset.split_of(r)))
        .collect();

    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (i, key) in matrix.row_keys().iter().enumerate() {
        match split_of.get(key.as_str()) {
            Some(Split::Test) => test_rows.push(i),
            _ => train_rows.push(i),
        }
    }
    if train_rows.is_empty() {
        return Err(PipelineError::msg("no train rows in the feature matrix"));
    }

    let row_target = |rows: &[usize]| -> Result<Vec<f64>, PipelineError> {
        rows.iter()
            .map(|&i| {
                let key = &matrix.row_keys()[i];
                targets
                    .get(key)
                    .copied()
                    .ok_or_else(|| PipelineError::msg(format!("no target for row {key:?}")))
            })
            .collect()
    };

    let train_matrix = matrix.select_rows(&train_rows);
    let train_target = row_target(&train_rows)?;
    let train_weights: Vec<f64> = train_matrix
        .row_keys()
        .iter()
        .map(|k| weight_map.get(k).copied().unwrap_or(1.0))
        .collect();

    let encoder = CategoricalEncoder::fit(&train_matrix, &train_target, 1.0);
    let train_encoded = encoder.transform(&train_matrix);

    let validation_data = match config.validation {
        ValidationMode::Test if !test_rows.is_empty() => {
            let test_matrix = matrix.select_rows(&test_rows);
            Some((encoder.transform(&test_matrix), row_target(&test_rows)?))
        }
        _ => None,
    };

    let mut model: Ensemble = fit(
        &train_encoded,
        &train_target,
        Some(&train_weights),
        &config.train,
        validation_data.as_ref().map(|(m, t)| (m, t.as_slice())),
    )?;
    model.encoder = Some(encoder);

    model
        .save(create(&config.out_path(artifacts::MODEL))?)
        .map_err(|e| PipelineError::msg(e.to_string()))?;

    let mut trace = create(&config.out_path(artifacts::TRACE))?;
    writeln!(trace, "iteration,train_loss,validation_loss")?;
    for (i, entry) in model.trace.iter().enumerate() {
        let validation = entry
            .validation_loss
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        writeln!(trace, "{i},{},{validation}", entry.train_loss)?;
    }
    trace.flush()?;

    println!(
        "train: {} trees on {} rows ({} held-out rows), final train loss {:.6}",
        model.trees.len(),
        train_rows.len(),
        test_rows.len(),
        model.trace.last().map(|t| t.train_loss).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Predict every matrix row and report per-scope metrics.
pub fn stage_evaluate(config: &PipelineConfig) -> Result<(), PipelineError> {
    let dataset = load_dataset(config)?;
    let matrix = load_matrix(config)?;
    let targets = load_targets(config)?;
    let model = Ensemble::load(open(&config.out_path(artifacts::MODEL))?)?;

    let encoded = match &model.encoder {
        Some(encoder) => encoder.transform(&matrix),
        None => matrix.select_rows(&(0..matrix.n_rows()).collect::<Vec<_>>()),
    };
    let predictions = model.predict(&encoded)?;
    let prediction_map: BTreeMap<String, f64> = encoded
        .row_keys()
        .iter()
        .cloned()
        .zip(predictions.iter().copied())
        .collect();

    let mut writer = create(&config.out_path(artifacts::PREDICTIONS))?;
    writeln!(writer, "cell_name,target,prediction")?;
    for key in encoded.row_keys() {
        let y = targets.get(key).copied();
        writeln!(
            writer,
            "{key},{},{}",
            y.map(|v| v.to_string()).unwrap_or_default(),
            prediction_map[key]
        )?;
    }
    writer.flush()?;

    let built: EvalReport = report(
        &dataset,
        &targets,
        &prediction_map,
        config.theta,
        &TargetBins::default(),
    )
    .map_err(|e| PipelineError::msg(e.to_string()))?;
    built
        .write_csv(create(&config.out_path(artifacts::REPORT))?)
        .map_err(PipelineError::Io)?;

    for row in built.rows.iter().filter(|r| r.scope.starts_with("combined_")) {
        println!(
            "evaluate: {} instances={} mape={:.3} p{:.0}={:.2}%",
            row.scope, row.instances, row.mape, config.theta, row.p_theta
        );
    }
    Ok(())
}

/// The full chain on existing input tables: ingest, kpi, neighbors,
/// features, weights, train, evaluate.
pub fn stage_pipeline(config: &PipelineConfig) -> Result<(), PipelineError> {
    stage_ingest(config)?;
    stage_kpi(config)?;
    stage_neighbors(config)?;
    stage_features(config)?;
    stage_weights(config)?;
    stage_train(config)?;
    stage_evaluate(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides_and_logging() {
        let mut config = PipelineConfig::default();
        config.apply("x", "50").unwrap();
        config.apply("theta", "4.5").unwrap();
        config.apply("seed", "9").unwrap();
        config.apply("train_objective", "huber").unwrap();
        config.apply("train_huber_delta", "0.5").unwrap();
        config.apply("comparison_aggregates", "mean,median,max").unwrap();
        assert_eq!(config.x_mbps, 50.0);
        assert_eq!(config.theta, 4.5);
        assert_eq!(config.seed, 9);
        assert_eq!(config.train.seed, 9);
        assert_eq!(config.train.objective, Objective::Huber { delta: 0.5 });
        assert_eq!(config.comparison_aggregates.len(), 3);

        assert!(config.apply("nonsense", "1").is_err());
        assert!(config.apply("x", "abc").is_err());

        let pairs = config.resolved_pairs();
        assert!(pairs.iter().any(|(k, v)| k == "x" && v == "50"));
        assert!(pairs.iter().any(|(k, v)| k == "train_huber_delta" && v == "0.5"));
        // Sorted and complete enough to reproduce the run.
        let keys: Vec<&String> = pairs.iter().map(|(k, _)| k).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn config_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nx = 200\n\ntrain_depth = 4\nlds_enabled = false\n").unwrap();
        let mut config = PipelineConfig::default();
        config.load_file(&path).unwrap();
        assert_eq!(config.x_mbps, 200.0);
        assert_eq!(config.train.depth, 4);
        assert!(!config.lds_enabled);

        std::fs::write(&path, "bad line\n").unwrap();
        assert!(config.load_file(&path).is_err());
    }

    #[test]
    fn pipeline_end_to_end_on_small_synth() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = PipelineConfig {
            data_dir: dir.path().join("data"),
            out_dir: dir.path().join("out"),
            ..PipelineConfig::default()
        };
        config.synth.n_cities = 3;
        config.synth.sites_per_city = 12;
        config.synth.n_test_cities = 1;
        config.train.n_estimators = 30;
        config.train.depth = 4;

        stage_synth(&config).unwrap();
        stage_pipeline(&config).unwrap();

        for name in [
            artifacts::CELLS_VALIDATED,
            artifacts::KPI,
            artifacts::KPI_EXCLUDED,
            artifacts::NEIGHBORS,
            artifacts::FEATURES,
            artifacts::MANIFEST,
            artifacts::TARGETS,
            artifacts::WEIGHTS,
            artifacts::MODEL,
            artifacts::TRACE,
            artifacts::PREDICTIONS,
            artifacts::REPORT,
        ] {
            assert!(config.out_path(name).exists(), "{name} missing");
        }

        let report_text = std::fs::read_to_string(config.out_path(artifacts::REPORT)).unwrap();
        assert!(report_text.contains("combined_train"));
        assert!(report_text.contains("combined_test"));

        // Determinism: rerunning features yields byte-identical output.
        let features_before = std::fs::read(config.out_path(artifacts::FEATURES)).unwrap();
        stage_features(&config).unwrap();
        let features_after = std::fs::read(config.out_path(artifacts::FEATURES)).unwrap();
        assert_eq!(features_before, features_after);
    }
}
