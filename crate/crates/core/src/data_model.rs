//! Cell record schema, table ingestion, and the modeling-eligibility filter.
//!
//! One record per cell, identified by a unique cell name. Records carry
//! position/orientation, technical parameters, and busy-hour counters.
//! Ingestion validates every row; nothing is imputed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum downlink PRB utilization (percent) for a cell to enter the
/// modeling set. Inclusive.
pub const ELIGIBILITY_MIN_PRB_USAGE: f64 = 20.0;

/// Duplexing scheme of a carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DuplexMode {
    Tdd,
    Fdd,
}

impl fmt::Display for DuplexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DuplexMode::Tdd => write!(f, "TDD"),
            DuplexMode::Fdd => write!(f, "FDD"),
        }
    }
}

impl std::str::FromStr for DuplexMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TDD" => Ok(DuplexMode::Tdd),
            "FDD" => Ok(DuplexMode::Fdd),
            other => Err(format!("unknown duplex mode {other:?}")),
        }
    }
}

/// One cell: identity, position/orientation, technical parameters, and
/// busy-hour counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_name: String,
    pub site_id: String,
    pub operator: String,
    pub city: String,
    pub longitude: f64,
    pub latitude: f64,
    /// Degrees clockwise from north, normalized to [0, 360).
    pub azimuth: f64,
    /// Antenna height in meters.
    pub height: f64,
    pub duplex_mode: DuplexMode,
    pub dl_narfcn: i64,
    pub frequency_band: String,
    /// Downlink bandwidth in MHz.
    pub dl_bandwidth: f64,
    /// E.g. "4T4R".
    pub txrx_mode: String,
    pub subframe_assignment: String,
    pub special_patterns: String,
    pub dl_prb_avail: f64,
    /// Percent in [0, 100].
    pub dl_prb_usage: f64,
    pub ul_prb_avail: f64,
    pub online_users: f64,
    pub dl_concurrent_users: f64,
    pub ul_concurrent_users: f64,
    /// MB over the busy hour.
    pub dl_traffic: f64,
    pub ul_traffic: f64,
    pub total_traffic: f64,
}

impl CellRecord {
    /// City-operator key; the unit of train/test splitting.
    pub fn city_operator(&self) -> String {
        city_operator_key(&self.city, &self.operator)
    }
}

/// Canonical `city|operator` key.
pub fn city_operator_key(city: &str, operator: &str) -> String {
    format!("{city}|{operator}")
}

/// Train/test membership of a city-operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train|test)")),
        }
    }
}

/// A validated collection of cell records with a per-city-operator split.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<CellRecord>,
    /// city-operator -> split. Every city-operator appears in exactly one
    /// split.
    pub splits: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Split tag of one record, defaulting to train when the manifest does
    /// not mention its city-operator.
    pub fn split_of(&self, record: &CellRecord) -> Split {
        self.splits
            .get(&record.city_operator())
            .copied()
            .unwrap_or(Split::Train)
    }

    /// Indices of records in the given split.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| self.split_of(r) == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Ingestion and validation failures.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("row {row}: field {field:?}: {message}")]
    Row {
        row: usize,
        field: String,
        message: String,
    },
    #[error("duplicate cell_name {0:?}")]
    DuplicateCellName(String),
    #[error("city-operator {0:?} assigned to both train and test")]
    SplitConflict(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Exact column set of the cells table, in canonical order.
pub const CELL_COLUMNS: [&str; 24] = [
    "cell_name",
    "site_id",
    "operator",
    "city",
    "longitude",
    "latitude",
    "azimuth",
    "height",
    "duplex_mode",
    "dl_narfcn",
    "frequency_band",
    "dl_bandwidth",
    "txrx_mode",
    "subframe_assignment",
    "special_patterns",
    "dl_prb_avail",
    "dl_prb_usage",
    "ul_prb_avail",
    "online_users",
    "dl_concurrent_users",
    "ul_concurrent_users",
    "dl_traffic",
    "ul_traffic",
    "total_traffic",
];

fn normalize_azimuth(az: f64) -> f64 {
    let mut a = az % 360.0;
    if a < 0.0 {
        a += 360.0;
    }
    // -1e-15 % 360 is -1e-15; the add above can then round to 360 exactly.
    if a >= 360.0 {
        a = 0.0;
    }
    a
}

struct ColumnMap {
    index: HashMap<String, usize>,
}

impl ColumnMap {
    fn from_header(header: &csv::StringRecord) -> Result<Self, DataError> {
        let mut index = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            index.insert(name.trim().to_string(), i);
        }
        for required in CELL_COLUMNS {
            if !index.contains_key(required) {
                return Err(DataError::MissingColumn(required.to_string()));
            }
        }
        Ok(ColumnMap { index })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, name: &str) -> &'r str {
        record.get(self.index[name]).unwrap_or("").trim()
    }
}

fn parse_f64(map: &ColumnMap, rec: &csv::StringRecord, row: usize, field: &str) -> Result<f64, DataError> {
    let raw = map.get(rec, field);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::Row {
            row,
            field: field.to_string(),
            message: format!("unparsable numeric {raw:?}"),
        })
}

fn parse_i64(map: &ColumnMap, rec: &csv::StringRecord, row: usize, field: &str) -> Result<i64, DataError> {
    let raw = map.get(rec, field);
    raw.parse::<i64>().map_err(|_| DataError::Row {
        row,
        field: field.to_string(),
        message: format!("unparsable integer {raw:?}"),
    })
}

fn non_negative(value: f64, row: usize, field: &str) -> Result<f64, DataError> {
    if value < 0.0 {
        Err(DataError::Row {
            row,
            field: field.to_string(),
            message: format!("must be >= 0, got {value}"),
        })
    } else {
        Ok(value)
    }
}

/// Parse and validate a cells table from any reader. Row order is preserved.
pub fn parse_cells_from_reader<R: io::Read>(reader: R) -> Result<Vec<CellRecord>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv_reader.headers()?.clone();
    let map = ColumnMap::from_header(&header)?;

    let mut records = Vec::new();
    let mut seen_names: HashSet<String> = HashSet::new();
    for (row_idx, row) in csv_reader.records().enumerate() {
        let row = row?;
        // 1-based data row index for error messages.
        let rownum = row_idx + 1;

        let cell_name = map.get(&row, "cell_name").to_string();
        if cell_name.is_empty() {
            return Err(DataError::Row {
                row: rownum,
                field: "cell_name".into(),
                message: "empty".into(),
            });
        }
        if !seen_names.insert(cell_name.clone()) {
            return Err(DataError::DuplicateCellName(cell_name));
        }
        let operator = map.get(&row, "operator").to_string();
        let city = map.get(&row, "city").to_string();
        if operator.is_empty() || city.is_empty() {
            return Err(DataError::Row {
                row: rownum,
                field: if operator.is_empty() { "operator".into() } else { "city".into() },
                message: "empty".into(),
            });
        }
        let mut site_id = map.get(&row, "site_id").to_string();
        if site_id.is_empty() {
            site_id = fallback_site_id(&cell_name).to_string();
        }

        let duplex_mode: DuplexMode =
            map.get(&row, "duplex_mode").parse().map_err(|message| DataError::Row {
                row: rownum,
                field: "duplex_mode".into(),
                message,
            })?;

        let dl_prb_usage = parse_f64(&map, &row, rownum, "dl_prb_usage")?;
        if !(0.0..=100.0).contains(&dl_prb_usage) {
            return Err(DataError::Row {
                row: rownum,
                field: "dl_prb_usage".into(),
                message: format!("must be within [0, 100], got {dl_prb_usage}"),
            });
        }

        let record = CellRecord {
            cell_name,
            site_id,
            operator,
            city,
            longitude: parse_f64(&map, &row, rownum, "longitude")?,
            latitude: parse_f64(&map, &row, rownum, "latitude")?,
            azimuth: normalize_azimuth(parse_f64(&map, &row, rownum, "azimuth")?),
            height: non_negative(parse_f64(&map, &row, rownum, "height")?, rownum, "height")?,
            duplex_mode,
            dl_narfcn: parse_i64(&map, &row, rownum, "dl_narfcn")?,
            frequency_band: map.get(&row, "frequency_band").to_string(),
            dl_bandwidth: non_negative(parse_f64(&map, &row, rownum, "dl_bandwidth")?, rownum, "dl_bandwidth")?,
            txrx_mode: map.get(&row, "txrx_mode").to_string(),
            subframe_assignment: map.get(&row, "subframe_assignment").to_string(),
            special_patterns: map.get(&row, "special_patterns").to_string(),
            dl_prb_avail: non_negative(parse_f64(&map, &row, rownum, "dl_prb_avail")?, rownum, "dl_prb_avail")?,
            dl_prb_usage,
            ul_prb_avail: non_negative(parse_f64(&map, &row, rownum, "ul_prb_avail")?, rownum, "ul_prb_avail")?,
            online_users: non_negative(parse_f64(&map, &row, rownum, "online_users")?, rownum, "online_users")?,
            dl_concurrent_users: non_negative(
                parse_f64(&map, &row, rownum, "dl_concurrent_users")?,
                rownum,
                "dl_concurrent_users",
            )?,
            ul_concurrent_users: non_negative(
                parse_f64(&map, &row, rownum, "ul_concurrent_users")?,
                rownum,
                "ul_concurrent_users",
            )?,
            dl_traffic: non_negative(parse_f64(&map, &row, rownum, "dl_traffic")?, rownum, "dl_traffic")?,
            ul_traffic: non_negative(parse_f64(&map, &row, rownum, "ul_traffic")?, rownum, "ul_traffic")?,
            total_traffic: non_negative(parse_f64(&map, &row, rownum, "total_traffic")?, rownum, "total_traffic")?,
        };
        records.push(record);
    }
    Ok(records)
}

/// Parse a cells table from a file path.
pub fn parse_cells(path: &Path) -> Result<Vec<CellRecord>, DataError> {
    let file = std::fs::File::open(path)?;
    parse_cells_from_reader(io::BufReader::new(file))
}

/// Write records back out in the canonical column order.
pub fn write_cells<W: io::Write>(writer: W, records: &[CellRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CELL_COLUMNS)?;
    for r in records {
        w.write_record(&[
            r.cell_name.clone(),
            r.site_id.clone(),
            r.operator.clone(),
            r.city.clone(),
            format!("{}", r.longitude),
            format!("{}", r.latitude),
            format!("{}", r.azimuth),
            format!("{}", r.height),
            r.duplex_mode.to_string(),
            format!("{}", r.dl_narfcn),
            r.frequency_band.clone(),
            format!("{}", r.dl_bandwidth),
            r.txrx_mode.clone(),
            r.subframe_assignment.clone(),
            r.special_patterns.clone(),
            format!("{}", r.dl_prb_avail),
            format!("{}", r.dl_prb_usage),
            format!("{}", r.ul_prb_avail),
            format!("{}", r.online_users),
            format!("{}", r.dl_concurrent_users),
            format!("{}", r.ul_concurrent_users),
            format!("{}", r.dl_traffic),
            format!("{}", r.ul_traffic),
            format!("{}", r.total_traffic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a split manifest (`city,operator,split` with header) into a map.
pub fn parse_split_manifest<R: io::Read>(reader: R) -> Result<BTreeMap<String, Split>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv_reader.headers()?.clone();
    let mut index = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        index.insert(name.trim().to_string(), i);
    }
    for required in ["city", "operator", "split"] {
        if !index.contains_key(required) {
            return Err(DataError::MissingColumn(required.to_string()));
        }
    }
    let mut splits = BTreeMap::new();
    for (row_idx, row) in csv_reader.records().enumerate() {
        let row = row?;
        let get = |name: &str| row.get(index[name]).unwrap_or("").trim().to_string();
        let key = city_operator_key(&get("city"), &get("operator"));
        let split: Split = get("split").parse().map_err(|message| DataError::Row {
            row: row_idx + 1,
            field: "split".into(),
            message,
        })?;
        if let Some(previous) = splits.insert(key.clone(), split) {
            if previous != split {
                return Err(DataError::SplitConflict(key));
            }
        }
    }
    Ok(splits)
}

/// Write a split manifest.
pub fn write_split_manifest<W: io::Write>(writer: W, splits: &BTreeMap<String, Split>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["city", "operator", "split"])?;
    for (key, split) in splits {
        let (city, operator) = key.split_once('|').unwrap_or((key.as_str(), ""));
        w.write_record([city, operator, &split.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Assemble a dataset from records plus a split manifest, checking split
/// integrity (each city-operator in exactly one split is guaranteed by the
/// map structure; here we only check coverage is consistent).
pub fn build_dataset(records: Vec<CellRecord>, splits: BTreeMap<String, Split>) -> Dataset {
    Dataset { records, splits }
}

/// Number of transmitters/receivers parsed from a `<n>T<m>R` mode string.
///
/// The caller records the feature as missing on a parse error.
pub fn parse_txrx(txrx_mode: &str) -> Result<(u32, u32), String> {
    let s = txrx_mode.trim().to_ascii_uppercase();
    let (tx_part, rx_part) = s
        .split_once('T')
        .ok_or_else(|| format!("txrx mode {txrx_mode:?} does not match <n>T<m>R"))?;
    let rx_digits = rx_part
        .strip_suffix('R')
        .ok_or_else(|| format!("txrx mode {txrx_mode:?} does not match <n>T<m>R"))?;
    let tx = tx_part
        .parse::<u32>()
        .map_err(|_| format!("txrx mode {txrx_mode:?}: bad transmitter count"))?;
    let rx = rx_digits
        .parse::<u32>()
        .map_err(|_| format!("txrx mode {txrx_mode:?}: bad receiver count"))?;
    Ok((tx, rx))
}

/// Best-effort site id from a cell name: everything before the last
/// underscore. Used only when the explicit site_id column is empty; the
/// concatenation convention between site and cell ids is not standardized,
/// so treat this as a guess.
pub fn fallback_site_id(cell_name: &str) -> &str {
    match cell_name.rfind('_') {
        Some(pos) if pos > 0 => &cell_name[..pos],
        _ => cell_name,
    }
}

/// Retain the records eligible for modeling: downlink PRB usage of at least
/// 20 percent. The caller keeps the pre-filter dataset around for
/// neighborhood queries. Returns the filtered dataset and the number of
/// records dropped.
pub fn filter_eligible(dataset: &Dataset) -> (Dataset, usize) {
    let records: Vec<CellRecord> = dataset
        .records
        .iter()
        .filter(|r| r.dl_prb_usage >= ELIGIBILITY_MIN_PRB_USAGE)
        .cloned()
        .collect();
    let dropped = dataset.records.len() - records.len();
    (
        Dataset {
            records,
            splits: dataset.splits.clone(),
        },
        dropped,
    )
}
