//! Browser bindings for the interactive demo page.
//!
//! Three operations back the panels in `www/index.html`: a toy-city
//! neighborhood/interference explorer, a KPI curve over the throughput bin
//! edges, and a label-distribution-smoothing weight profile. Every binding
//! takes and returns JSON strings so the page stays framework-free.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

use cellqos::kpi::{tmler_x, ThroughputDistribution, TimeSlotSeries, DEFAULT_BIN_EDGES};
use cellqos::spatial::{bearing, interference_rule, neighbor_box, PlanarPoint, SpatialCell};
use cellqos::weighting::{lds_weights, lds_weights_raw, smoothed_density, LdsConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoCell {
    pub name: String,
    pub site: String,
    pub x: f64,
    pub y: f64,
    pub azimuth: f64,
    /// Latent quality in [0, 1]; drives dot color on the map.
    pub quality: f64,
}

fn error_json(message: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": message.to_string() }).to_string()
}

struct XorShift(u64);

impl XorShift {
    fn new(seed: u64) -> Self {
        XorShift(seed.wrapping_mul(0x9E3779B97F4A7C15) | 1)
    }

    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// A toy planar city: jittered site grid, three sectors per site, latent
/// quality loosely tied to local density.
pub fn generate_city(seed: u64, n_sites: usize, pitch: f64) -> Vec<DemoCell> {
    let mut rng = XorShift::new(seed.wrapping_add(11));
    let side = (n_sites as f64).sqrt().ceil() as usize;
    let mut positions = Vec::with_capacity(n_sites);
    for s in 0..n_sites {
        let i = (s % side) as f64 - side as f64 / 2.0;
        let j = (s / side) as f64 - side as f64 / 2.0;
        positions.push(PlanarPoint::new(
            i * pitch + rng.range(-0.3, 0.3) * pitch,
            j * pitch + rng.range(-0.3, 0.3) * pitch,
        ));
    }
    let mut cells = Vec::with_capacity(n_sites * 3);
    for (s, position) in positions.iter().enumerate() {
        let nearby = positions.iter().filter(|p| p.distance(position) <= 800.0).count() - 1;
        for sector in 0..3 {
            let azimuth = 120.0 * sector as f64 + rng.range(-15.0, 15.0);
            let quality = (0.85 - 0.12 * nearby as f64 / 4.0 + rng.range(-0.35, 0.15)).clamp(0.05, 0.98);
            cells.push(DemoCell {
                name: format!("S{s:03}_C{}", sector + 1),
                site: format!("S{s:03}"),
                x: position.x,
                y: position.y,
                azimuth: ((azimuth % 360.0) + 360.0) % 360.0,
                quality,
            });
        }
    }
    cells
}

#[derive(Debug, Serialize)]
pub struct NeighborItem {
    pub index: usize,
    pub neighbor: bool,
    /// Empty unless interfering.
    pub rule: String,
    pub distance: f64,
    pub bearing: f64,
}

#[derive(Debug, Serialize)]
pub struct NeighborScene {
    pub center: [f64; 2],
    pub corners: [[f64; 2]; 4],
    pub items: Vec<NeighborItem>,
}

/// Classify every other cell of the scene against the selected one:
/// inside/outside the neighbor box, and which interference rule applies.
pub fn classify(cells: &[DemoCell], selected: usize, azimuth_override: Option<f64>) -> Option<NeighborScene> {
    let me = cells.get(selected)?;
    let azimuth = azimuth_override.unwrap_or(me.azimuth);
    let my_point = PlanarPoint::new(me.x, me.y);
    let square = neighbor_box(my_point, azimuth);
    let my_cell = SpatialCell {
        record_index: selected,
        point: my_point,
        azimuth,
        site_id: me.site.clone(),
    };

    let items = cells
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != selected)
        .map(|(i, c)| {
            let point = PlanarPoint::new(c.x, c.y);
            let other = SpatialCell {
                record_index: i,
                point,
                azimuth: c.azimuth,
                site_id: c.site.clone(),
            };
            let neighbor = square.contains(point);
            let rule = if neighbor {
                interference_rule(&my_cell, &other).map(|r| r.to_string()).unwrap_or_default()
            } else {
                String::new()
            };
            NeighborItem {
                index: i,
                neighbor,
                rule,
                distance: my_point.distance(&point),
                bearing: bearing(my_point, point).unwrap_or(0.0),
            }
        })
        .collect();

    Some(NeighborScene {
        center: [square.center.x, square.center.y],
        corners: square.corners().map(|c| [c.x, c.y]),
        items,
    })
}

/// The KPI at every bin edge for one throughput/slot configuration.
pub fn kpi_curve_values(volumes: &[f64], slot_times: &[f64]) -> Result<(Vec<f64>, Vec<f64>), String> {
    let dist = ThroughputDistribution::with_default_edges(volumes.to_vec()).map_err(|e| e.to_string())?;
    let slots = TimeSlotSeries::new(slot_times.to_vec()).map_err(|e| e.to_string())?;
    let mut edges = Vec::new();
    let mut values = Vec::new();
    for &edge in dist.edges() {
        let value = tmler_x(&dist, &slots, edge).map_err(|e| e.to_string())?;
        edges.push(edge);
        values.push(value.y);
    }
    Ok((edges, values))
}

// ---- wasm-bindgen surface -------------------------------------------------

/// Generate a toy city and return its cells as JSON.
#[wasm_bindgen]
pub fn demo_city(seed: u32, n_sites: u32, pitch: f64) -> String {
    let cells = generate_city(seed as u64, (n_sites as usize).clamp(4, 400), pitch.clamp(150.0, 2000.0));
    serde_json::to_string(&cells).unwrap_or_else(error_json)
}

/// Neighborhood box and per-cell classification for the selected cell.
/// `azimuth_override < 0` keeps the cell's own azimuth.
#[wasm_bindgen]
pub fn classify_neighbors(cells_json: &str, selected: usize, azimuth_override: f64) -> String {
    let cells: Vec<DemoCell> = match serde_json::from_str(cells_json) {
        Ok(cells) => cells,
        Err(e) => return error_json(e),
    };
    let over = if azimuth_override < 0.0 { None } else { Some(azimuth_override % 360.0) };
    match classify(&cells, selected, over) {
        Some(scene) => serde_json::to_string(&scene).unwrap_or_else(error_json),
        None => error_json("selected index out of range"),
    }
}

/// KPI curve across all bin edges. Inputs: 14 bin volumes (MB) and the
/// per-slot times (ms).
#[wasm_bindgen]
pub fn kpi_curve(volumes_json: &str, slots_json: &str) -> String {
    let volumes: Vec<f64> = match serde_json::from_str(volumes_json) {
        Ok(v) => v,
        Err(e) => return error_json(e),
    };
    let slot_times: Vec<f64> = match serde_json::from_str(slots_json) {
        Ok(v) => v,
        Err(e) => return error_json(e),
    };
    match kpi_curve_values(&volumes, &slot_times) {
        Ok((edges, values)) => {
            // The +inf terminator is not JSON-representable; label it null.
            let edges: Vec<Option<f64>> =
                edges.iter().map(|e| if e.is_finite() { Some(*e) } else { None }).collect();
            serde_json::json!({ "edges": edges, "y": values }).to_string()
        }
        Err(e) => error_json(e),
    }
}

/// Default bin edge list for the KPI panel.
#[wasm_bindgen]
pub fn kpi_bin_edges() -> String {
    serde_json::to_string(&DEFAULT_BIN_EDGES.to_vec()).unwrap_or_else(error_json)
}

/// Histogram, smoothed density, and per-sample weights for a target set.
#[wasm_bindgen]
pub fn lds_profile(targets_json: &str, n_bins: usize, kernel_length: usize, sigma: f64) -> String {
    let targets: Vec<f64> = match serde_json::from_str(targets_json) {
        Ok(v) => v,
        Err(e) => return error_json(e),
    };
    let config = LdsConfig {
        n_bins,
        kernel_length,
        sigma,
        range: (0.0, 1.0),
    };
    let smoothed = match smoothed_density(&targets, &config) {
        Ok(s) => s,
        Err(e) => return error_json(e),
    };
    let weights = match lds_weights(&targets, &config) {
        Ok(w) => w,
        Err(e) => return error_json(e),
    };
    let raw = lds_weights_raw(&targets, &config).unwrap_or_default();
    let mut counts = vec![0u32; config.n_bins];
    let width = 1.0 / config.n_bins as f64;
    for t in &targets {
        let b = ((t / width) as usize).min(config.n_bins - 1);
        counts[b] += 1;
    }
    serde_json::json!({
        "bin_width": width,
        "counts": counts,
        "smoothed": smoothed,
        "weights": weights,
        "raw_weights": raw,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn city_is_deterministic_and_sectored() {
        let a = generate_city(7, 25, 400.0);
        let b = generate_city(7, 25, 400.0);
        assert_eq!(a.len(), 75);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.iter().all(|c| (0.0..360.0).contains(&c.azimuth)));
        assert!(a.iter().all(|c| (0.0..=1.0).contains(&c.quality)));
    }

    #[test]
    fn classification_matches_direct_geometry() {
        let cells = generate_city(3, 16, 350.0);
        let scene = classify(&cells, 0, None).unwrap();
        assert_eq!(scene.items.len(), cells.len() - 1);

        let me = &cells[0];
        let square = neighbor_box(PlanarPoint::new(me.x, me.y), me.azimuth);
        for item in &scene.items {
            let c = &cells[item.index];
            assert_eq!(item.neighbor, square.contains(PlanarPoint::new(c.x, c.y)));
            if !item.rule.is_empty() {
                assert!(item.neighbor, "interferers must be neighbors");
                assert!(["R1", "R2", "R3"].contains(&item.rule.as_str()));
            }
        }
        // Azimuth override actually moves the box.
        let turned = classify(&cells, 0, Some((me.azimuth + 180.0) % 360.0)).unwrap();
        assert_ne!(scene.center, turned.center);
    }

    #[test]
    fn kpi_curve_is_monotone_over_edges() {
        let mut volumes = vec![0.0; 14];
        volumes[0] = 50.0;
        volumes[10] = 50.0;
        let (edges, values) = kpi_curve_values(&volumes, &[90.0, 10.0]).unwrap();
        assert_eq!(edges.len(), 15);
        assert_eq!(values[0], 1.0);
        assert!((values[10] - 0.55).abs() < 1e-12);
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn json_surfaces_roundtrip() {
        let city = demo_city(1, 9, 400.0);
        assert!(city.starts_with('['));
        let scene = classify_neighbors(&city, 2, -1.0);
        assert!(scene.contains("\"corners\""));
        let bad = classify_neighbors("not json", 0, -1.0);
        assert!(bad.contains("\"error\""));

        let profile = lds_profile("[0.2,0.2,0.9]", 100, 7, 2.0);
        assert!(profile.contains("\"weights\""));
        let parsed: serde_json::Value = serde_json::from_str(&profile).unwrap();
        let weights = parsed["weights"].as_array().unwrap();
        let mean: f64 = weights.iter().map(|w| w.as_f64().unwrap()).sum::<f64>() / weights.len() as f64;
        assert!((mean - 1.0).abs() < 1e-9);

        let curve = kpi_curve("[0,0,0,0,0,0,0,0,0,0,100,0,0,0]", "[5,5]");
        assert!(curve.contains("\"y\""));
        let error = kpi_curve("[1]", "[5]");
        assert!(error.contains("\"error\""));
    }
}
