//! Cell-level 5G quality-of-service estimation.
//!
//! The crate ingests busy-hour cell counter tables, computes a downlink
//! experience-rate KPI from binned throughput volumes and per-slot time
//! readings, derives spatial neighborhood/interference features, reweights
//! imbalanced targets, trains a gradient-boosted regression ensemble, and
//! reports MAPE / coverage metrics per city-operator and target bin.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`data_model`] — cell record schema, CSV ingestion, eligibility filter
//! * [`kpi`] — the experience-rate KPI from throughput/time tables
//! * [`spatial`] — planar projection, azimuth math, grid index, neighbor
//!   boxes and interference rules
//! * [`features`] — derived counters, scene statistics, interferer
//!   statistics, comparison features, matrix assembly
//! * [`weighting`] — label-distribution-smoothing sample weights
//! * [`regressor`] — deterministic gradient-boosted regression trees
//! * [`evaluation`] — MAPE / coverage metrics, stratified folds, random
//!   hyperparameter search, scope reports
//! * [`synth`] — synthetic multi-city dataset generation
//! * [`pipeline`] — file-based stage orchestration used by the CLI

pub mod data_model;
pub mod evaluation;
pub mod features;
pub mod kpi;
pub mod pipeline;
pub mod regressor;
pub mod spatial;
pub mod synth;
pub mod weighting;

/// Sentinel stored in feature matrices where a value could not be computed
/// (zero denominator, empty interferer set, out-of-grid cell, failed parse).
///
/// Deliberately far outside the range of every real feature. Raw NaN or
/// infinity never enters a matrix; the split finder routes sentinel rows
/// through a learned default direction instead of comparing them.
pub const MISSING: f64 = -1.0e30;

/// True when `v` is the missing-value sentinel.
#[inline]
pub fn is_missing(v: f64) -> bool {
    v == MISSING
}

/// Replace non-finite intermediates with the sentinel.
#[inline]
pub fn finite_or_missing(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        MISSING
    }
}
