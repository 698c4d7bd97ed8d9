//! The downlink experience-rate KPI.
//!
//! For a cell with a binned throughput distribution (MB of downlink volume
//! per throughput bin) and per-slot downlink time readings (ms, where the
//! final slot is the one in which the buffer empties), the KPI at a
//! threshold `x` Mbps is
//!
//! ```text
//! y = 1 - (volume in bins below x / total volume)
//!       * (time excluding the last slot / total time)
//! ```
//!
//! A value near 1 means almost all busy-hour traffic was served at `x` Mbps
//! or better with good time utilization; near 0 means the opposite.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bin edges of the default throughput distribution, in Mbps. The
/// implied final bin is open-ended. 5 Mbps steps up to 40, then widening
/// increments of 10, 50, 100, 300, and 500 up to the 1000+ bin: 14 bins.
pub const DEFAULT_BIN_EDGES: [f64; 14] = [
    0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0, 100.0, 200.0, 500.0, 1000.0,
];

/// Default KPI threshold in Mbps.
pub const DEFAULT_X_MBPS: f64 = 100.0;

/// Binned downlink volume distribution of one cell.
///
/// `edges` holds the lower edge of each bin plus a trailing `+inf`
/// terminator, so `volumes.len() == edges.len() - 1`. Bin `i` covers
/// `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputDistribution {
    edges: Vec<f64>,
    volumes: Vec<f64>,
}

/// Per-slot downlink time readings in ms. The last slot is the one in which
/// the buffer becomes empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlotSeries {
    slot_times: Vec<f64>,
}

/// KPI value at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiValue {
    /// In [0, 1].
    pub y: f64,
    /// Threshold in Mbps.
    pub x: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpiError {
    #[error("bin edges must be strictly increasing")]
    EdgesNotIncreasing,
    #[error("volumes must be non-negative and finite")]
    BadVolume,
    #[error("expected {expected} volumes for {edges} edges, got {got}")]
    VolumeCount { expected: usize, edges: usize, got: usize },
    #[error("slot times must be non-negative and finite, with at least one slot")]
    BadSlots,
    #[error("threshold {0} Mbps is not a bin edge")]
    NotAnEdge(f64),
    #[error("KPI undefined: total volume is zero")]
    ZeroVolume,
    #[error("KPI undefined: total slot time is zero")]
    ZeroTime,
}

impl ThroughputDistribution {
    /// Build from finite lower edges and per-bin volumes. The open-ended
    /// final bin is implied; `volumes.len()` must equal `lower_edges.len()`.
    pub fn new(lower_edges: &[f64], volumes: Vec<f64>) -> Result<Self, KpiError> {
        let mut edges = lower_edges.to_vec();
        edges.push(f64::INFINITY);
        let increasing = |w: &[f64]| w[0] < w[1];
        if edges.len() < 2 || !edges.windows(2).all(increasing) || edges[0].is_nan() {
            return Err(KpiError::EdgesNotIncreasing);
        }
        if volumes.len() != edges.len() - 1 {
            return Err(KpiError::VolumeCount {
                expected: edges.len() - 1,
                edges: edges.len(),
                got: volumes.len(),
            });
        }
        if volumes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(KpiError::BadVolume);
        }
        Ok(ThroughputDistribution { edges, volumes })
    }

    /// Default 14-bin distribution.
    pub fn with_default_edges(volumes: Vec<f64>) -> Result<Self, KpiError> {
        Self::new(&DEFAULT_BIN_EDGES, volumes)
    }

    /// All edges, including the trailing `+inf` terminator.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

impl TimeSlotSeries {
    pub fn new(slot_times: Vec<f64>) -> Result<Self, KpiError> {
        if slot_times.is_empty() || slot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(KpiError::BadSlots);
        }
        Ok(TimeSlotSeries { slot_times })
    }

    pub fn slot_times(&self) -> &[f64] {
        &self.slot_times
    }

    pub fn total_time(&self) -> f64 {
        self.slot_times.iter().sum()
    }
}

/// The experience-rate KPI at threshold `x` Mbps.
///
/// `x` must coincide with a bin edge (including the `+inf` terminator); the
/// volume ratio sums whole bins, so intra-bin thresholds are refused. Cells
/// with zero total volume or zero total time have no defined KPI and are
/// excluded by callers.
pub fn tmler_x(
    dist: &ThroughputDistribution,
    slots: &TimeSlotSeries,
    x: f64,
) -> Result<KpiValue, KpiError> {
    if !dist.edges.contains(&x) {
        return Err(KpiError::NotAnEdge(x));
    }
    let total_volume = dist.total_volume();
    if total_volume <= 0.0 {
        return Err(KpiError::ZeroVolume);
    }
    let total_time = slots.total_time();
    if total_time <= 0.0 {
        return Err(KpiError::ZeroTime);
    }

    // Bins whose upper edge is <= x, i.e. entirely below the threshold.
    let volume_below: f64 = dist
        .volumes
        .iter()
        .zip(dist.edges.windows(2))
        .filter(|(_, w)| w[1] <= x)
        .map(|(v, _)| v)
        .sum();
    let time_excluding_last: f64 = slots.slot_times[..slots.slot_times.len() - 1].iter().sum();

    let volume_ratio = volume_below / total_volume;
    let time_ratio = time_excluding_last / total_time;
    let y = (1.0 - volume_ratio * time_ratio).clamp(0.0, 1.0);
    Ok(KpiValue { y, x })
}

/// Why a cell was excluded from a batch KPI computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpiExclusion {
    pub cell_name: String,
    pub reason: String,
}

/// KPI for every cell with valid inputs; invalid cells are reported rather
/// than failing the batch. Output ordering is by cell name.
pub fn kpi_batch(
    distributions: &BTreeMap<String, ThroughputDistribution>,
    slot_series: &BTreeMap<String, TimeSlotSeries>,
    x: f64,
) -> (BTreeMap<String, KpiValue>, Vec<KpiExclusion>) {
    let mut values = BTreeMap::new();
    let mut exclusions = Vec::new();
    for (cell_name, dist) in distributions {
        let Some(slots) = slot_series.get(cell_name) else {
            exclusions.push(KpiExclusion {
                cell_name: cell_name.clone(),
                reason: "no slot series".into(),
            });
            continue;
        };
        match tmler_x(dist, slots, x) {
            Ok(value) => {
                values.insert(cell_name.clone(), value);
            }
            Err(err) => exclusions.push(KpiExclusion {
                cell_name: cell_name.clone(),
                reason: err.to_string(),
            }),
        }
    }
    for cell_name in slot_series.keys() {
        if !distributions.contains_key(cell_name) {
            exclusions.push(KpiExclusion {
                cell_name: cell_name.clone(),
                reason: "no throughput distribution".into(),
            });
        }
    }
    (values, exclusions)
}

/// Parse a throughput table: `cell_name,bin_1..bin_B` in MB, one row per
/// cell, bins matching the supplied edge list.
pub fn parse_throughput_table<R: io::Read>(
    reader: R,
    lower_edges: &[f64],
) -> Result<BTreeMap<String, ThroughputDistribution>, String> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv_reader.headers().map_err(|e| e.to_string())?.clone();
    if header.get(0) != Some("cell_name") {
        return Err("throughput table must start with cell_name".into());
    }
    let n_bins = header.len() - 1;
    if n_bins != lower_edges.len() {
        return Err(format!(
            "throughput table has {n_bins} bins but {} edges configured",
            lower_edges.len()
        ));
    }
    let mut out = BTreeMap::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let name = row.get(0).unwrap_or("").trim().to_string();
        let mut volumes = Vec::with_capacity(n_bins);
        for j in 1..row.len() {
            let raw = row.get(j).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| format!("row {}: bad volume {raw:?}", i + 1))?;
            volumes.push(v);
        }
        let dist = ThroughputDistribution::new(lower_edges, volumes)
            .map_err(|e| format!("row {}: {e}", i + 1))?;
        if out.insert(name.clone(), dist).is_some() {
            return Err(format!("duplicate cell {name:?} in throughput table"));
        }
    }
    Ok(out)
}

/// Parse a slots table: `cell_name,slot_1..slot_N` in ms. N is fixed per
/// file but may vary between files.
pub fn parse_slots_table<R: io::Read>(reader: R) -> Result<BTreeMap<String, TimeSlotSeries>, String> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv_reader.headers().map_err(|e| e.to_string())?.clone();
    if header.get(0) != Some("cell_name") {
        return Err("slots table must start with cell_name".into());
    }
    let n_slots = header.len() - 1;
    if n_slots == 0 {
        return Err("slots table needs at least one slot column".into());
    }
    let mut out = BTreeMap::new();
    for (i, row) in csv_reader.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let name = row.get(0).unwrap_or("").trim().to_string();
        let mut times = Vec::with_capacity(n_slots);
        for j in 1..row.len() {
            let raw = row.get(j).unwrap_or("").trim();
            let t: f64 = raw
                .parse()
                .map_err(|_| format!("row {}: bad slot time {raw:?}", i + 1))?;
            times.push(t);
        }
        let series = TimeSlotSeries::new(times).map_err(|e| format!("row {}: {e}", i + 1))?;
        if out.insert(name.clone(), series).is_some() {
            return Err(format!("duplicate cell {name:?} in slots table"));
        }
    }
    Ok(out)
}
