//! File-based land-use grids and scene statistics.
//!
//! A grid covers one contiguous area with square cells of a fixed size;
//! every grid cell carries exactly one category. A land-use file holds one
//! or more grid blocks (one per urban area), each starting with a header
//! line `origin_x,origin_y,cell_size_m,n_rows,n_cols` — the origin is the
//! lower-left corner in degrees — followed by `n_rows` lines of `n_cols`
//! single-character category codes, row 0 being the southernmost.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::spatial::project;
use crate::MISSING;

/// Surface categories with prominent effects on coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LandUseCategory {
    Urban,
    Water,
    ForestScrub,
    Open,
    Other,
}

pub const CATEGORIES: [LandUseCategory; 5] = [
    LandUseCategory::Urban,
    LandUseCategory::Water,
    LandUseCategory::ForestScrub,
    LandUseCategory::Open,
    LandUseCategory::Other,
];

impl LandUseCategory {
    pub fn code(self) -> char {
        match self {
            LandUseCategory::Urban => 'U',
            LandUseCategory::Water => 'W',
            LandUseCategory::ForestScrub => 'F',
            LandUseCategory::Open => 'O',
            LandUseCategory::Other => 'X',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'U' => Some(LandUseCategory::Urban),
            'W' => Some(LandUseCategory::Water),
            'F' => Some(LandUseCategory::ForestScrub),
            'O' => Some(LandUseCategory::Open),
            'X' => Some(LandUseCategory::Other),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LandUseCategory::Urban => "urban",
            LandUseCategory::Water => "water",
            LandUseCategory::ForestScrub => "forest_scrub",
            LandUseCategory::Open => "open",
            LandUseCategory::Other => "other",
        }
    }

    fn index(self) -> usize {
        CATEGORIES.iter().position(|c| *c == self).unwrap()
    }
}

/// One category grid over a contiguous area.
#[derive(Debug, Clone)]
pub struct LandUseGrid {
    /// Lower-left corner, degrees.
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    categories: Vec<LandUseCategory>,
}

impl LandUseGrid {
    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        cell_size_m: f64,
        n_rows: usize,
        n_cols: usize,
        categories: Vec<LandUseCategory>,
    ) -> Result<Self, String> {
        if categories.len() != n_rows * n_cols {
            return Err(format!(
                "grid has {} categories, expected {}",
                categories.len(),
                n_rows * n_cols
            ));
        }
        if cell_size_m <= 0.0 {
            return Err("grid cell size must be positive".into());
        }
        Ok(LandUseGrid {
            origin_lon,
            origin_lat,
            cell_size_m,
            n_rows,
            n_cols,
            categories,
        })
    }

    #[inline]
    pub fn category(&self, row: usize, col: usize) -> LandUseCategory {
        self.categories[row * self.n_cols + col]
    }

    /// Planar meters of a point relative to the grid origin.
    fn local(&self, lon: f64, lat: f64) -> (f64, f64) {
        let p = project(lon, lat, self.origin_lon, self.origin_lat);
        (p.x, p.y)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let (x, y) = self.local(lon, lat);
        x >= 0.0
            && y >= 0.0
            && x < self.n_cols as f64 * self.cell_size_m
            && y < self.n_rows as f64 * self.cell_size_m
    }

    /// Per-category share of grid cells whose center lies within `radius`
    /// meters of the point. Falls back to the containing grid cell when the
    /// disc is smaller than the grid resolution; `None` when the point is
    /// outside the grid.
    pub fn shares_within(&self, lon: f64, lat: f64, radius: f64) -> Option<[f64; 5]> {
        if !self.contains(lon, lat) {
            return None;
        }
        let (x, y) = self.local(lon, lat);
        let s = self.cell_size_m;
        let col_lo = (((x - radius) / s).floor().max(0.0)) as usize;
        let row_lo = (((y - radius) / s).floor().max(0.0)) as usize;
        let col_hi = (((x + radius) / s).ceil() as usize).min(self.n_cols);
        let row_hi = (((y + radius) / s).ceil() as usize).min(self.n_rows);

        let mut counts = [0usize; 5];
        let mut total = 0usize;
        let r2 = radius * radius;
        for row in row_lo..row_hi {
            let cy = (row as f64 + 0.5) * s;
            for col in col_lo..col_hi {
                let cx = (col as f64 + 0.5) * s;
                let dx = cx - x;
                let dy = cy - y;
                if dx * dx + dy * dy <= r2 {
                    counts[self.category(row, col).index()] += 1;
                    total += 1;
                }
            }
        }
        if total == 0 {
            let col = ((x / s) as usize).min(self.n_cols - 1);
            let row = ((y / s) as usize).min(self.n_rows - 1);
            counts[self.category(row, col).index()] = 1;
            total = 1;
        }
        let mut shares = [0.0; 5];
        for (share, count) in shares.iter_mut().zip(counts) {
            *share = count as f64 / total as f64;
        }
        Some(shares)
    }
}

/// All land-use grids known to a run; the first grid containing a point
/// answers for it.
#[derive(Debug, Clone, Default)]
pub struct LandUseMap {
    pub grids: Vec<LandUseGrid>,
}

impl LandUseMap {
    pub fn grid_for(&self, lon: f64, lat: f64) -> Option<&LandUseGrid> {
        self.grids.iter().find(|g| g.contains(lon, lat))
    }
}

/// Per-category mean and variance of the one-hot land-use indicator within
/// each radius: mean is the category share, variance the Bernoulli
/// `share * (1 - share)`. `radii` orders near, quasi-near, far. A point
/// outside every grid yields all-missing.
pub fn scene_features(lon: f64, lat: f64, map: &LandUseMap, radii: &[f64; 3]) -> [f64; 30] {
    let mut out = [MISSING; 30];
    let Some(grid) = map.grid_for(lon, lat) else {
        return out;
    };
    for (ri, &radius) in radii.iter().enumerate() {
        if let Some(shares) = grid.shares_within(lon, lat, radius) {
            for (ci, share) in shares.iter().enumerate() {
                out[ri * 10 + ci * 2] = *share;
                out[ri * 10 + ci * 2 + 1] = share * (1.0 - share);
            }
        }
    }
    out
}

/// Column names matching [`scene_features`] output order.
pub fn scene_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(30);
    for band in ["near", "quasi_near", "far"] {
        for category in CATEGORIES {
            names.push(format!("scene_{band}_{}_mean", category.label()));
            names.push(format!("scene_{band}_{}_var", category.label()));
        }
    }
    names
}

/// Parse a land-use file: one or more grid blocks.
pub fn parse_land_use<R: io::Read>(reader: R) -> Result<LandUseMap, String> {
    let mut lines = io::BufReader::new(reader).lines();
    let mut grids = Vec::new();
    loop {
        let header = match lines.next() {
            None => break,
            Some(line) => line.map_err(|e| e.to_string())?,
        };
        let header = header.trim();
        if header.is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(format!("bad grid header {header:?}"));
        }
        let origin_lon: f64 = parts[0].parse().map_err(|_| format!("bad origin_x {:?}", parts[0]))?;
        let origin_lat: f64 = parts[1].parse().map_err(|_| format!("bad origin_y {:?}", parts[1]))?;
        let cell_size: f64 = parts[2].parse().map_err(|_| format!("bad cell size {:?}", parts[2]))?;
        let n_rows: usize = parts[3].parse().map_err(|_| format!("bad n_rows {:?}", parts[3]))?;
        let n_cols: usize = parts[4].parse().map_err(|_| format!("bad n_cols {:?}", parts[4]))?;

        let mut categories = Vec::with_capacity(n_rows * n_cols);
        for row in 0..n_rows {
            let line = lines
                .next()
                .ok_or_else(|| format!("grid truncated at row {row}"))?
                .map_err(|e| e.to_string())?;
            let line = line.trim();
            if line.len() != n_cols {
                return Err(format!("grid row {row} has {} cells, expected {n_cols}", line.len()));
            }
            for c in line.chars() {
                categories
                    .push(LandUseCategory::from_code(c).ok_or_else(|| format!("bad category code {c:?}"))?);
            }
        }
        grids.push(LandUseGrid::new(origin_lon, origin_lat, cell_size, n_rows, n_cols, categories)?);
    }
    Ok(LandUseMap { grids })
}

pub fn write_land_use<W: Write>(writer: &mut W, map: &LandUseMap) -> io::Result<()> {
    for grid in &map.grids {
        writeln!(
            writer,
            "{},{},{},{},{}",
            grid.origin_lon, grid.origin_lat, grid.cell_size_m, grid.n_rows, grid.n_cols
        )?;
        for row in 0..grid.n_rows {
            let line: String = (0..grid.n_cols).map(|col| grid.category(row, col).code()).collect();
            writeln!(writer, "{line}")?;
        }
    }
    Ok(())
}
