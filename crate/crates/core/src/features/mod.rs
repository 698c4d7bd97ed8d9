//! Feature engineering: derived counters, scene statistics, interferer
//! statistics, comparison features, context counts, and matrix assembly.

pub mod land_use;
pub mod matrix;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::data_model::{filter_eligible, parse_txrx, CellRecord, Dataset};
use crate::kpi::KpiValue;
use crate::spatial::{compute_neighborhoods, NeighborhoodMap};
use crate::{finite_or_missing, is_missing, MISSING};

pub use land_use::{scene_feature_names, scene_features, LandUseCategory, LandUseGrid, LandUseMap};
pub use matrix::{ColumnKind, ColumnSpec, FeatureMatrix, ManifestFile, MatrixError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("matrix: {0}")]
    Matrix(#[from] MatrixError),
    #[error("unknown column {0:?} in preprocess spec")]
    UnknownColumn(String),
    #[error("column {0:?} is categorical; transforms apply to numeric columns")]
    CategoricalColumn(String),
    #[error("power transform on negative value {value} in column {column:?}")]
    PowerNegative { column: String, value: f64 },
    #[error("reflect transform expects targets in [0, 1], found {0}")]
    TargetOutOfRange(f64),
    #[error("no rows to assemble: no eligible cell has a KPI value")]
    EmptyAssembly,
}

/// Division that folds zero denominators and missing operands into the
/// missing sentinel.
#[inline]
fn ratio(numerator: f64, denominator: f64) -> f64 {
    if is_missing(numerator) || is_missing(denominator) || denominator == 0.0 {
        MISSING
    } else {
        finite_or_missing(numerator / denominator)
    }
}

/// The derived per-cell quantities: antenna counts plus rates of traffic
/// per resource and user. Undefined ratios hold the missing sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedFeatures {
    pub tx: f64,
    pub rx: f64,
    /// Used downlink PRBs: available PRBs times usage percent / 100.
    pub prb_used_dl: f64,
    /// DL-to-UL concurrent users.
    pub ratio_co_users: f64,
    pub users_per_prb_dl: f64,
    pub users_per_used_prb_dl: f64,
    pub users_per_prb_ul: f64,
    /// DL volume per concurrent DL user.
    pub dl_volume_speed: f64,
    pub ul_volume_speed: f64,
    pub dl_volume_per_tx: f64,
    pub dl_traffic_per_bandwidth: f64,
    /// DL volume per percentage point of PRB usage.
    pub dl_volume_per_usage_pct: f64,
    pub dl_per_co_user_per_prb: f64,
    pub dl_per_co_user_per_used_prb: f64,
    pub ul_per_co_user_per_prb: f64,
}

pub const DERIVED_FEATURE_NAMES: [&str; 15] = [
    "tx",
    "rx",
    "prb_used_dl",
    "ratio_co_users",
    "users_per_prb_dl",
    "users_per_used_prb_dl",
    "users_per_prb_ul",
    "dl_volume_speed",
    "ul_volume_speed",
    "dl_volume_per_tx",
    "dl_traffic_per_bandwidth",
    "dl_volume_per_usage_pct",
    "dl_per_co_user_per_prb",
    "dl_per_co_user_per_used_prb",
    "ul_per_co_user_per_prb",
];

impl DerivedFeatures {
    pub fn as_array(&self) -> [f64; 15] {
        [
            self.tx,
            self.rx,
            self.prb_used_dl,
            self.ratio_co_users,
            self.users_per_prb_dl,
            self.users_per_used_prb_dl,
            self.users_per_prb_ul,
            self.dl_volume_speed,
            self.ul_volume_speed,
            self.dl_volume_per_tx,
            self.dl_traffic_per_bandwidth,
            self.dl_volume_per_usage_pct,
            self.dl_per_co_user_per_prb,
            self.dl_per_co_user_per_used_prb,
            self.ul_per_co_user_per_prb,
        ]
    }
}

/// All derived quantities for one record.
pub fn derive_features(record: &CellRecord) -> DerivedFeatures {
    let (tx, rx) = match parse_txrx(&record.txrx_mode) {
        Ok((t, r)) => (t as f64, r as f64),
        Err(_) => (MISSING, MISSING),
    };
    let prb_used_dl = record.dl_prb_avail * record.dl_prb_usage / 100.0;
    let dl_volume_speed = ratio(record.dl_traffic, record.dl_concurrent_users);
    let ul_volume_speed = ratio(record.ul_traffic, record.ul_concurrent_users);
    DerivedFeatures {
        tx,
        rx,
        prb_used_dl,
        ratio_co_users: ratio(record.dl_concurrent_users, record.ul_concurrent_users),
        users_per_prb_dl: ratio(record.dl_concurrent_users, record.dl_prb_avail),
        users_per_used_prb_dl: ratio(record.dl_concurrent_users, prb_used_dl),
        users_per_prb_ul: ratio(record.ul_concurrent_users, record.ul_prb_avail),
        dl_volume_speed,
        ul_volume_speed,
        dl_volume_per_tx: ratio(record.dl_traffic, tx),
        dl_traffic_per_bandwidth: ratio(record.dl_traffic, record.dl_bandwidth),
        dl_volume_per_usage_pct: ratio(record.dl_traffic, record.dl_prb_usage),
        dl_per_co_user_per_prb: ratio(dl_volume_speed, record.dl_prb_avail),
        dl_per_co_user_per_used_prb: ratio(dl_volume_speed, prb_used_dl),
        ul_per_co_user_per_prb: ratio(ul_volume_speed, record.ul_prb_avail),
    }
}

/// Linear-interpolation percentile of an ascending-sorted slice, q in
/// [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Point aggregates of a [`StatBundle`] available for comparison features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Median,
    Max,
    P25,
    P75,
}

impl Aggregate {
    pub fn label(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Median => "median",
            Aggregate::Max => "max",
            Aggregate::P25 => "p25",
            Aggregate::P75 => "p75",
        }
    }
}

/// Statistics of one base feature over a cell's interferer set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatBundle {
    /// Share of interferer values <= own value.
    pub ratio_le: f64,
    /// Share of interferer values > own value.
    pub ratio_gt: f64,
    pub mean: f64,
    pub mean_plus_std: f64,
    pub mean_minus_std: f64,
    pub median: f64,
    pub max: f64,
    pub p25: f64,
    pub p75: f64,
    /// Normalized counts over the four bins bounded by the value set's
    /// {0, 25, 50, 75, 100}th percentiles.
    pub bin_shares: [f64; 4],
}

pub const STAT_BUNDLE_NAMES: [&str; 13] = [
    "ratio_le",
    "ratio_gt",
    "mean",
    "mean_plus_std",
    "mean_minus_std",
    "median",
    "max",
    "p25",
    "p75",
    "bin1_share",
    "bin2_share",
    "bin3_share",
    "bin4_share",
];

impl StatBundle {
    pub fn all_missing() -> Self {
        StatBundle {
            ratio_le: MISSING,
            ratio_gt: MISSING,
            mean: MISSING,
            mean_plus_std: MISSING,
            mean_minus_std: MISSING,
            median: MISSING,
            max: MISSING,
            p25: MISSING,
            p75: MISSING,
            bin_shares: [MISSING; 4],
        }
    }

    pub fn as_array(&self) -> [f64; 13] {
        [
            self.ratio_le,
            self.ratio_gt,
            self.mean,
            self.mean_plus_std,
            self.mean_minus_std,
            self.median,
            self.max,
            self.p25,
            self.p75,
            self.bin_shares[0],
            self.bin_shares[1],
            self.bin_shares[2],
            self.bin_shares[3],
        ]
    }

    pub fn aggregate(&self, which: Aggregate) -> f64 {
        match which {
            Aggregate::Mean => self.mean,
            Aggregate::Median => self.median,
            Aggregate::Max => self.max,
            Aggregate::P25 => self.p25,
            Aggregate::P75 => self.p75,
        }
    }
}

/// Statistics of `values` (one base feature over the interfering cells)
/// relative to the cell's own value. Missing entries in `values` are
/// ignored; an empty set yields an all-missing bundle, and a missing own
/// value leaves only the value-set statistics defined.
pub fn interferer_stats(own_value: f64, values: &[f64]) -> StatBundle {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !is_missing(*v)).collect();
    if sorted.is_empty() {
        return StatBundle::all_missing();
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;

    let mean = sorted.iter().sum::<f64>() / n;
    // Population standard deviation; a singleton set has spread zero.
    let variance = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = variance.sqrt();
    let median = percentile(&sorted, 50.0);
    let p25 = percentile(&sorted, 25.0);
    let p75 = percentile(&sorted, 75.0);
    let max = *sorted.last().unwrap();

    let (ratio_le, ratio_gt) = if is_missing(own_value) {
        (MISSING, MISSING)
    } else {
        let le = sorted.iter().filter(|v| **v <= own_value).count() as f64 / n;
        (le, 1.0 - le)
    };

    // Bin by the quartile edges; the first bin is closed at the minimum.
    let mut counts = [0usize; 4];
    for v in &sorted {
        let bin = if *v <= p25 {
            0
        } else if *v <= median {
            1
        } else if *v <= p75 {
            2
        } else {
            3
        };
        counts[bin] += 1;
    }
    let mut bin_shares = [0.0; 4];
    for (share, count) in bin_shares.iter_mut().zip(counts) {
        *share = count as f64 / n;
    }

    StatBundle {
        ratio_le,
        ratio_gt,
        mean,
        mean_plus_std: mean + std,
        mean_minus_std: mean - std,
        median,
        max,
        p25,
        p75,
        bin_shares,
    }
}

/// Comparison of an own value `f_c` against an interferer aggregate `f_n`:
/// a positive-difference indicator, the relative accuracy
/// `ln f_n - ln f_c`, and the log-magnitude ratio `ln|f_c - f_n| - ln f_c`.
/// Any logarithm of a non-positive argument yields the missing sentinel.
pub fn comparison_features(f_c: f64, f_n: f64) -> (f64, f64, f64) {
    if is_missing(f_c) || is_missing(f_n) {
        return (MISSING, MISSING, MISSING);
    }
    let sign = if f_c - f_n > 0.0 { 1.0 } else { 0.0 };
    let relative_accuracy = if f_c > 0.0 && f_n > 0.0 {
        f_n.ln() - f_c.ln()
    } else {
        MISSING
    };
    let magnitude = (f_c - f_n).abs();
    let magnitude_ratio = if f_c > 0.0 && magnitude > 0.0 {
        magnitude.ln() - f_c.ln()
    } else {
        MISSING
    };
    (sign, relative_accuracy, magnitude_ratio)
}

/// Context counts for one cell: set sizes plus distance statistics over
/// neighbors and interferers. Empty sets yield missing distances.
pub fn context_counts(neighbor_distances: &[f64], interferer_distances: &[f64]) -> [f64; 8] {
    fn distance_stats(distances: &[f64]) -> [f64; 3] {
        if distances.is_empty() {
            return [MISSING; 3];
        }
        let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        [min, mean, max]
    }
    let n = distance_stats(neighbor_distances);
    let f = distance_stats(interferer_distances);
    [
        neighbor_distances.len() as f64,
        interferer_distances.len() as f64,
        n[0],
        n[1],
        n[2],
        f[0],
        f[1],
        f[2],
    ]
}

pub const CONTEXT_NAMES: [&str; 8] = [
    "n_neighbors",
    "n_interferers",
    "nbr_dist_min",
    "nbr_dist_mean",
    "nbr_dist_max",
    "intf_dist_min",
    "intf_dist_mean",
    "intf_dist_max",
];

/// The base features whose interferer statistics enter the matrix.
pub const INTERFERER_BASE_FEATURES: [&str; 12] = [
    "height",
    "online_users",
    "dl_prb_avail",
    "dl_prb_usage",
    "prb_used_dl",
    "dl_traffic",
    "ul_traffic",
    "dl_concurrent_users",
    "ul_concurrent_users",
    "dl_volume_speed",
    "ul_volume_speed",
    "dl_per_co_user_per_prb",
];

fn base_feature_value(record: &CellRecord, derived: &DerivedFeatures, which: usize) -> f64 {
    match which {
        0 => record.height,
        1 => record.online_users,
        2 => record.dl_prb_avail,
        3 => record.dl_prb_usage,
        4 => derived.prb_used_dl,
        5 => record.dl_traffic,
        6 => record.ul_traffic,
        7 => record.dl_concurrent_users,
        8 => record.ul_concurrent_users,
        9 => derived.dl_volume_speed,
        10 => derived.ul_volume_speed,
        11 => derived.dl_per_co_user_per_prb,
        _ => unreachable!("base feature index out of range"),
    }
}

/// Raw predictor columns: every ingested field except the cell name (kept
/// as the row key) and the site/operator/city identifiers.
fn raw_column_specs() -> Vec<ColumnSpec> {
    vec![
        ColumnSpec::numeric("longitude"),
        ColumnSpec::numeric("latitude"),
        ColumnSpec::numeric("azimuth"),
        ColumnSpec::numeric("height"),
        ColumnSpec::categorical("duplex_mode"),
        ColumnSpec::numeric("dl_narfcn"),
        ColumnSpec::categorical("frequency_band"),
        ColumnSpec::numeric("dl_bandwidth"),
        ColumnSpec::categorical("txrx_mode"),
        ColumnSpec::categorical("subframe_assignment"),
        ColumnSpec::categorical("special_patterns"),
        ColumnSpec::numeric("dl_prb_avail"),
        ColumnSpec::numeric("dl_prb_usage"),
        ColumnSpec::numeric("ul_prb_avail"),
        ColumnSpec::numeric("online_users"),
        ColumnSpec::numeric("dl_concurrent_users"),
        ColumnSpec::numeric("ul_concurrent_users"),
        ColumnSpec::numeric("dl_traffic"),
        ColumnSpec::numeric("ul_traffic"),
        ColumnSpec::numeric("total_traffic"),
    ]
}

/// Feature assembly configuration.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    /// Scene sampling radii: near, quasi-near, far (meters).
    pub scene_radii: [f64; 3],
    /// Which bundle aggregates get comparison features. The default pair
    /// keeps the manifest near 300 columns.
    pub comparison_aggregates: Vec<Aggregate>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            scene_radii: [300.0, 1000.0, 3000.0],
            comparison_aggregates: vec![Aggregate::Mean, Aggregate::Median],
        }
    }
}

/// The full column manifest implied by a configuration: raw, derived,
/// scene, per-base interferer bundles and comparisons, then context.
pub fn build_manifest(config: &FeatureConfig) -> Vec<ColumnSpec> {
    let mut manifest = raw_column_specs();
    manifest.extend(DERIVED_FEATURE_NAMES.iter().map(|n| ColumnSpec::numeric(*n)));
    manifest.extend(scene_feature_names().into_iter().map(ColumnSpec::numeric));
    for base in INTERFERER_BASE_FEATURES {
        for stat in STAT_BUNDLE_NAMES {
            manifest.push(ColumnSpec::numeric(format!("intf_{base}_{stat}")));
        }
        for aggregate in &config.comparison_aggregates {
            let label = aggregate.label();
            manifest.push(ColumnSpec::numeric(format!("cmp_{base}_{label}_sign")));
            manifest.push(ColumnSpec::numeric(format!("cmp_{base}_{label}_rel_acc")));
            manifest.push(ColumnSpec::numeric(format!("cmp_{base}_{label}_mag_ratio")));
        }
    }
    manifest.extend(CONTEXT_NAMES.iter().map(|n| ColumnSpec::numeric(*n)));
    manifest
}

/// Matrix plus aligned target and bookkeeping from one assembly run.
#[derive(Debug)]
pub struct AssembledFeatures {
    pub matrix: FeatureMatrix,
    /// KPI target per matrix row.
    pub target: Vec<f64>,
    /// Eligible cells skipped because no KPI value was available.
    pub skipped_no_kpi: Vec<String>,
}

/// Assemble the feature matrix over the modeling-eligible cells of
/// `universe` that carry a KPI value. Neighborhoods and interferer
/// statistics are computed against the full universe, including cells below
/// the utilization threshold. Rows are ordered by cell name; the manifest
/// depends only on the configuration.
pub fn assemble_matrix(
    universe: &Dataset,
    kpi_map: &BTreeMap<String, KpiValue>,
    land_use: &LandUseMap,
    config: &FeatureConfig,
) -> Result<AssembledFeatures, FeatureError> {
    let neighborhoods = compute_neighborhoods(universe);
    assemble_with_neighborhoods(universe, &neighborhoods, kpi_map, land_use, config)
}

/// [`assemble_matrix`] with precomputed neighborhoods, for callers that
/// also export them.
pub fn assemble_with_neighborhoods(
    universe: &Dataset,
    neighborhoods: &NeighborhoodMap,
    kpi_map: &BTreeMap<String, KpiValue>,
    land_use: &LandUseMap,
    config: &FeatureConfig,
) -> Result<AssembledFeatures, FeatureError> {
    let derived: Vec<DerivedFeatures> = universe.records.par_iter().map(derive_features).collect();

    let (eligible, _) = filter_eligible(universe);
    let eligible_names: std::collections::HashSet<&str> =
        eligible.records.iter().map(|r| r.cell_name.as_str()).collect();

    let mut skipped_no_kpi = Vec::new();
    let mut row_records: Vec<usize> = Vec::new();
    for (i, record) in universe.records.iter().enumerate() {
        if !eligible_names.contains(record.cell_name.as_str()) {
            continue;
        }
        if kpi_map.contains_key(&record.cell_name) {
            row_records.push(i);
        } else {
            skipped_no_kpi.push(record.cell_name.clone());
        }
    }
    if row_records.is_empty() {
        return Err(FeatureError::EmptyAssembly);
    }
    row_records.sort_by(|&a, &b| universe.records[a].cell_name.cmp(&universe.records[b].cell_name));

    let manifest = build_manifest(config);
    let mut matrix = FeatureMatrix::new(manifest.clone());

    // Vocabularies from the assembled rows, sorted for stability.
    for (col, spec) in manifest.iter().enumerate() {
        if spec.kind == ColumnKind::Categorical {
            let levels: Vec<String> = row_records
                .iter()
                .map(|&i| categorical_raw_value(&universe.records[i], &spec.name))
                .collect();
            matrix.set_vocabulary(col, levels);
        }
    }

    let rows: Vec<Vec<f64>> = row_records
        .par_iter()
        .map(|&i| {
            assemble_row(
                &universe.records[i],
                &derived[i],
                i,
                universe,
                &derived,
                neighborhoods,
                land_use,
                config,
                &matrix,
            )
        })
        .collect();

    let mut target = Vec::with_capacity(row_records.len());
    for (&i, row) in row_records.iter().zip(rows) {
        let name = universe.records[i].cell_name.clone();
        target.push(kpi_map[&name].y);
        matrix.push_row(name, row)?;
    }

    Ok(AssembledFeatures {
        matrix,
        target,
        skipped_no_kpi,
    })
}

fn categorical_raw_value(record: &CellRecord, column: &str) -> String {
    match column {
        "duplex_mode" => record.duplex_mode.to_string(),
        "frequency_band" => record.frequency_band.clone(),
        "txrx_mode" => record.txrx_mode.clone(),
        "subframe_assignment" => record.subframe_assignment.clone(),
        "special_patterns" => record.special_patterns.clone(),
        other => unreachable!("unknown categorical column {other}"),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_row(
    record: &CellRecord,
    derived: &DerivedFeatures,
    record_index: usize,
    universe: &Dataset,
    all_derived: &[DerivedFeatures],
    neighborhoods: &NeighborhoodMap,
    land_use: &LandUseMap,
    config: &FeatureConfig,
    matrix: &FeatureMatrix,
) -> Vec<f64> {
    let mut row = Vec::with_capacity(matrix.n_cols());

    // Raw block; categorical levels are encoded through the vocabulary.
    row.push(record.longitude);
    row.push(record.latitude);
    row.push(record.azimuth);
    row.push(record.height);
    row.push(matrix.level_code(4, &record.duplex_mode.to_string()).expect("vocab"));
    row.push(record.dl_narfcn as f64);
    row.push(matrix.level_code(6, &record.frequency_band).expect("vocab"));
    row.push(record.dl_bandwidth);
    row.push(matrix.level_code(8, &record.txrx_mode).expect("vocab"));
    row.push(matrix.level_code(9, &record.subframe_assignment).expect("vocab"));
    row.push(matrix.level_code(10, &record.special_patterns).expect("vocab"));
    row.push(record.dl_prb_avail);
    row.push(record.dl_prb_usage);
    row.push(record.ul_prb_avail);
    row.push(record.online_users);
    row.push(record.dl_concurrent_users);
    row.push(record.ul_concurrent_users);
    row.push(record.dl_traffic);
    row.push(record.ul_traffic);
    row.push(record.total_traffic);

    row.extend_from_slice(&derived.as_array());
    row.extend_from_slice(&scene_features(
        record.longitude,
        record.latitude,
        land_use,
        &config.scene_radii,
    ));

    let interferers = &neighborhoods.interferers[record_index];
    for base in 0..INTERFERER_BASE_FEATURES.len() {
        let own = base_feature_value(record, derived, base);
        let values: Vec<f64> = interferers
            .iter()
            .map(|f| {
                base_feature_value(&universe.records[f.record_index], &all_derived[f.record_index], base)
            })
            .collect();
        let bundle = interferer_stats(own, &values);
        row.extend_from_slice(&bundle.as_array());
        for aggregate in &config.comparison_aggregates {
            let (sign, rel_acc, mag_ratio) = comparison_features(own, bundle.aggregate(*aggregate));
            row.push(sign);
            row.push(rel_acc);
            row.push(mag_ratio);
        }
    }

    let neighbor_distances: Vec<f64> =
        neighborhoods.neighbors[record_index].iter().map(|n| n.distance_m).collect();
    let interferer_distances: Vec<f64> = interferers.iter().map(|f| f.distance_m).collect();
    row.extend_from_slice(&context_counts(&neighbor_distances, &interferer_distances));

    debug_assert_eq!(row.len(), matrix.n_cols());
    row
}

/// Per-column transforms available to [`preprocess`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnTransform {
    /// Zero mean, unit variance; constant columns become all zeros.
    Standardize,
    /// Into [0, 1]; constant columns become all zeros.
    MinMax,
    /// `v^lambda`; refuses negative inputs.
    Power(f64),
}

/// Invertible target transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetTransform {
    /// `1 - y` for targets in [0, 1]: turns a left-skewed distribution
    /// right-skewed.
    Reflect,
    Power(f64),
}

/// What was applied to the target, so predictions can be mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetTransformRecord {
    pub transform: Option<TargetTransform>,
}

impl TargetTransformRecord {
    pub fn apply(&self, y: f64) -> f64 {
        match self.transform {
            None => y,
            Some(TargetTransform::Reflect) => 1.0 - y,
            Some(TargetTransform::Power(lambda)) => y.powf(lambda),
        }
    }

    pub fn invert(&self, transformed: f64) -> f64 {
        match self.transform {
            None => transformed,
            Some(TargetTransform::Reflect) => 1.0 - transformed,
            Some(TargetTransform::Power(lambda)) => transformed.powf(1.0 / lambda),
        }
    }
}

/// Preprocessing plan: named numeric columns and an optional target
/// transform.
#[derive(Debug, Clone, Default)]
pub struct PreprocessSpec {
    pub columns: Vec<(String, ColumnTransform)>,
    pub target: Option<TargetTransform>,
}

const STD_FLOOR: f64 = 1e-12;

/// Apply the plan in place. Missing entries pass through untouched.
/// Returns the target transform record for inversion at prediction time.
pub fn preprocess(
    matrix: &mut FeatureMatrix,
    target: &mut [f64],
    spec: &PreprocessSpec,
) -> Result<TargetTransformRecord, FeatureError> {
    for (name, transform) in &spec.columns {
        let col = matrix
            .column_index(name)
            .ok_or_else(|| FeatureError::UnknownColumn(name.clone()))?;
        if matrix.manifest()[col].kind == ColumnKind::Categorical {
            return Err(FeatureError::CategoricalColumn(name.clone()));
        }
        let present: Vec<f64> = matrix.column(col).filter(|v| !is_missing(*v)).collect();
        if present.is_empty() {
            continue;
        }
        match transform {
            ColumnTransform::Standardize => {
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                let variance =
                    present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / present.len() as f64;
                let std = variance.sqrt();
                for r in 0..matrix.n_rows() {
                    let v = matrix.get(r, col);
                    if !is_missing(v) {
                        let z = if std < STD_FLOOR { 0.0 } else { (v - mean) / std };
                        matrix.set(r, col, z);
                    }
                }
            }
            ColumnTransform::MinMax => {
                let min = present.iter().copied().fold(f64::INFINITY, f64::min);
                let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = max - min;
                for r in 0..matrix.n_rows() {
                    let v = matrix.get(r, col);
                    if !is_missing(v) {
                        let z = if span < STD_FLOOR { 0.0 } else { (v - min) / span };
                        matrix.set(r, col, z);
                    }
                }
            }
            ColumnTransform::Power(lambda) => {
                if let Some(bad) = present.iter().find(|v| **v < 0.0) {
                    return Err(FeatureError::PowerNegative {
                        column: name.clone(),
                        value: *bad,
                    });
                }
                for r in 0..matrix.n_rows() {
                    let v = matrix.get(r, col);
                    if !is_missing(v) {
                        matrix.set(r, col, v.powf(*lambda));
                    }
                }
            }
        }
    }

    let record = TargetTransformRecord { transform: spec.target };
    if let Some(transform) = spec.target {
        for y in target.iter_mut() {
            match transform {
                TargetTransform::Reflect => {
                    if !(0.0..=1.0).contains(y) {
                        return Err(FeatureError::TargetOutOfRange(*y));
                    }
                }
                TargetTransform::Power(_) => {
                    if *y < 0.0 {
                        return Err(FeatureError::TargetOutOfRange(*y));
                    }
                }
            }
            *y = record.apply(*y);
        }
    }
    Ok(record)
}
