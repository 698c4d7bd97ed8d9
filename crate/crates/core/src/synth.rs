//! Synthetic multi-city cell datasets for desk-scale end-to-end runs.
//!
//! Each cell gets a latent quality in [0, 1] that shapes its throughput
//! histogram (mass above or below the 100 Mbps edge) and its last-slot
//! time share, and that correlates with bandwidth, antenna configuration,
//! congestion counters, local site density, and urban share. The KPI
//! computed downstream from the emitted tables is therefore learnable from
//! the emitted features. The generative story is not physical; it exists
//! to make end-to-end checks meaningful.
//!
//! Generation is single-threaded and fully determined by the seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::{
    build_dataset, write_cells, write_split_manifest, CellRecord, Dataset, DuplexMode, Split,
};
use crate::features::land_use::{write_land_use, LandUseCategory, LandUseGrid, LandUseMap};
use crate::kpi::{ThroughputDistribution, TimeSlotSeries, DEFAULT_BIN_EDGES};
use crate::spatial::{unproject, PlanarPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_cities: usize,
    /// Base site count per city-operator; actual counts vary by a
    /// per-city size factor.
    pub sites_per_city: usize,
    pub sectors_per_site: usize,
    /// Site grid pitch in meters.
    pub pitch_m: f64,
    /// Cities moved wholesale into the test split, from the end.
    pub n_test_cities: usize,
    pub seed: u64,
    /// Amplitude of the irreducible noise in the latent quality.
    pub quality_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cities: 6,
            sites_per_city: 40,
            sectors_per_site: 3,
            pitch_m: 400.0,
            n_test_cities: 2,
            seed: 0,
            quality_noise: 0.05,
        }
    }
}

/// Everything one generation run produces, in memory.
pub struct SynthOutput {
    pub dataset: Dataset,
    pub distributions: BTreeMap<String, ThroughputDistribution>,
    pub slots: BTreeMap<String, TimeSlotSeries>,
    pub land_use: LandUseMap,
}

const SLOT_COUNT: usize = 24;

struct CityPlan {
    name: String,
    origin_lon: f64,
    origin_lat: f64,
    operators: Vec<String>,
    sites_per_operator: usize,
    /// Per-city grid pitch; sparse cities see less interference and reach
    /// higher quality, which keeps the KPI distribution wide.
    pitch_m: f64,
}

fn city_plans(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<CityPlan> {
    (0..config.n_cities)
        .map(|c| {
            // Cities sit on a coarse lon/lat grid, far beyond any
            // neighborhood reach of each other.
            let origin_lon = 24.0 + 2.0 * (c % 8) as f64;
            let origin_lat = 37.0 + 1.5 * (c / 8) as f64;
            let size_factor = rng.random_range(0.55..1.6);
            let operators = if c % 3 == 0 {
                vec!["OpA".to_string(), "OpB".to_string()]
            } else {
                vec!["OpA".to_string()]
            };
            CityPlan {
                name: format!("City{c:02}"),
                origin_lon,
                origin_lat,
                operators,
                sites_per_operator: ((config.sites_per_city as f64 * size_factor) as usize).max(4),
                pitch_m: config.pitch_m * rng.random_range(0.8..2.2),
            }
        })
        .collect()
}

/// Deterministic per-block hash in [0, 1).
fn block_noise(seed: u64, x: i64, y: i64) -> f64 {
    let mut state = seed ^ (x as u64).wrapping_mul(0x9E3779B97F4A7C15) ^ (y as u64).wrapping_mul(0xC2B2AE3D27D4EB4F);
    state ^= state >> 30;
    state = state.wrapping_mul(0xBF58476D1CE4E5B9);
    state ^= state >> 27;
    state = state.wrapping_mul(0x94D049BB133111EB);
    state ^= state >> 31;
    (state >> 11) as f64 / (1u64 << 53) as f64
}

fn land_use_grid_for_city(plan: &CityPlan, half_extent_m: f64, seed: u64) -> LandUseGrid {
    let cell_size = 100.0;
    let n = (2.0 * half_extent_m / cell_size).ceil() as usize;
    let origin = PlanarPoint::new(-half_extent_m, -half_extent_m);
    let (origin_lon, origin_lat) = unproject(origin, plan.origin_lon, plan.origin_lat);

    let mut categories = Vec::with_capacity(n * n);
    let center = n as f64 / 2.0;
    for row in 0..n {
        for col in 0..n {
            // Coarse 8-cell blocks avoid salt-and-pepper maps.
            let v = block_noise(seed, (col / 8) as i64, (row / 8) as i64);
            let d = ((row as f64 - center).hypot(col as f64 - center)) / center;
            let category = if d < 0.45 && v < 0.8 {
                LandUseCategory::Urban
            } else if v < 0.10 {
                LandUseCategory::Water
            } else if v < 0.35 {
                LandUseCategory::ForestScrub
            } else if v < 0.55 && d < 0.7 {
                LandUseCategory::Urban
            } else if v < 0.85 {
                LandUseCategory::Open
            } else {
                LandUseCategory::Other
            };
            categories.push(category);
        }
    }
    LandUseGrid::new(origin_lon, origin_lat, cell_size, n, n, categories).expect("consistent grid")
}

struct SitePlan {
    site_id: String,
    position: PlanarPoint,
    duplex: DuplexMode,
    band: &'static str,
    narfcn: i64,
    bandwidth: f64,
    txrx: &'static str,
    height: f64,
}

fn plan_sites(plan: &CityPlan, operator_index: usize, pitch: f64, rng: &mut ChaCha8Rng) -> Vec<SitePlan> {
    let n = plan.sites_per_operator;
    let side = (n as f64).sqrt().ceil() as usize;
    let offset = operator_index as f64 * pitch / 2.0;
    let mut sites = Vec::with_capacity(n);
    for s in 0..n {
        let i = (s % side) as f64;
        let j = (s / side) as f64;
        let jitter_x = rng.random_range(-0.25..0.25) * pitch;
        let jitter_y = rng.random_range(-0.25..0.25) * pitch;
        let x = (i - side as f64 / 2.0) * pitch + offset + jitter_x;
        let y = (j - side as f64 / 2.0) * pitch + offset + jitter_y;

        let duplex = if rng.random_range(0.0..1.0) < 0.7 {
            DuplexMode::Tdd
        } else {
            DuplexMode::Fdd
        };
        let (band, narfcn_base, bandwidth_choices): (&str, i64, &[f64]) = match duplex {
            DuplexMode::Tdd => {
                if rng.random_range(0.0..1.0) < 0.75 {
                    ("n78", 630000, &[60.0, 80.0, 100.0])
                } else {
                    ("n41", 518000, &[40.0, 60.0, 80.0])
                }
            }
            DuplexMode::Fdd => {
                if rng.random_range(0.0..1.0) < 0.5 {
                    ("n28", 155000, &[20.0, 30.0])
                } else {
                    ("n1", 428000, &[20.0, 40.0])
                }
            }
        };
        let bandwidth = bandwidth_choices[rng.random_range(0..bandwidth_choices.len())];
        let txrx = match rng.random_range(0..10) {
            0..=2 => "4T4R",
            3..=5 => "8T8R",
            6..=8 => "32T32R",
            _ => "64T64R",
        };
        sites.push(SitePlan {
            site_id: format!("{}{}S{s:03}", plan.name, ["A", "B"][operator_index]),
            position: PlanarPoint::new(x, y),
            duplex,
            band,
            narfcn: narfcn_base + rng.random_range(0..600),
            bandwidth,
            txrx,
            height: rng.random_range(15.0..45.0),
        });
    }
    sites
}

fn txrx_score(txrx: &str) -> f64 {
    match txrx {
        "4T4R" => 0.25,
        "8T8R" => 0.5,
        "32T32R" => 0.75,
        _ => 1.0,
    }
}

/// Generate a full synthetic dataset.
pub fn generate(config: &SynthConfig) -> SynthOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let plans = city_plans(config, &mut rng);

    let mut records = Vec::new();
    let mut distributions = BTreeMap::new();
    let mut slots = BTreeMap::new();
    let mut grids = Vec::new();
    let mut splits = BTreeMap::new();

    for (city_index, plan) in plans.iter().enumerate() {
        let split = if city_index + config.n_test_cities >= plans.len() {
            Split::Test
        } else {
            Split::Train
        };

        let side = (plan.sites_per_operator as f64).sqrt().ceil();
        let half_extent = side * plan.pitch_m / 2.0 + 3500.0;
        let grid = land_use_grid_for_city(plan, half_extent, config.seed ^ (city_index as u64) << 8);

        for (operator_index, operator) in plan.operators.iter().enumerate() {
            splits.insert(format!("{}|{operator}", plan.name), split);
            let sites = plan_sites(plan, operator_index, plan.pitch_m, &mut rng);

            // Local density drives the interference part of the latent
            // quality: sites within 800 m of each site.
            let density: Vec<usize> = sites
                .iter()
                .map(|a| {
                    sites
                        .iter()
                        .filter(|b| a.position.distance(&b.position) <= 800.0)
                        .count()
                        - 1
                })
                .collect();

            for (site, &nearby) in sites.iter().zip(&density) {
                for sector in 0..config.sectors_per_site {
                    let azimuth = (360.0 / config.sectors_per_site as f64) * sector as f64
                        + rng.random_range(-12.0..12.0);
                    let azimuth = ((azimuth % 360.0) + 360.0) % 360.0;
                    let (lon, lat) = unproject(site.position, plan.origin_lon, plan.origin_lat);

                    let congestion: f64 = rng.random_range(0.0..1.0);
                    let bandwidth_norm = (site.bandwidth - 20.0) / 80.0;
                    let interference = (nearby as f64 / 6.0).min(1.0);
                    let urban_share = grid
                        .shares_within(lon, lat, 300.0)
                        .map(|s| s[0])
                        .unwrap_or(0.5);
                    let noise = rng.random_range(-1.0..1.0) * config.quality_noise;
                    // Congestion bites superlinearly, so most cells sit in
                    // the healthy upper range with a long low tail.
                    let quality = (0.80 + 0.20 * bandwidth_norm + 0.10 * txrx_score(site.txrx)
                        - 0.60 * congestion.powf(1.6)
                        - 0.22 * interference
                        - 0.05 * urban_share
                        + noise)
                        .clamp(0.02, 0.99);

                    let cell_name = format!("{}_C{}", site.site_id, sector + 1);
                    let dl_prb_avail = (site.bandwidth * 2.73).round();
                    let dl_prb_usage = (8.0 + 88.0 * congestion + rng.random_range(-4.0..4.0))
                        .clamp(0.0, 100.0);
                    let online_users = 15.0 + 350.0 * congestion * rng.random_range(0.5..1.0);
                    let dl_concurrent = (online_users * (0.02 + 0.08 * congestion)).floor();
                    let ul_concurrent = (dl_concurrent * rng.random_range(0.3..0.7)).floor();
                    let dl_traffic = (150.0 + 8000.0 * congestion)
                        * (site.bandwidth / 100.0)
                        * rng.random_range(0.7..1.3);
                    let ul_traffic = dl_traffic * rng.random_range(0.06..0.16);

                    records.push(CellRecord {
                        cell_name: cell_name.clone(),
                        site_id: site.site_id.clone(),
                        operator: operator.clone(),
                        city: plan.name.clone(),
                        longitude: lon,
                        latitude: lat,
                        azimuth,
                        height: site.height,
                        duplex_mode: site.duplex,
                        dl_narfcn: site.narfcn,
                        frequency_band: site.band.to_string(),
                        dl_bandwidth: site.bandwidth,
                        txrx_mode: site.txrx.to_string(),
                        subframe_assignment: match site.duplex {
                            DuplexMode::Tdd => "SA2".to_string(),
                            DuplexMode::Fdd => "-".to_string(),
                        },
                        special_patterns: match site.duplex {
                            DuplexMode::Tdd => "SSP7".to_string(),
                            DuplexMode::Fdd => "-".to_string(),
                        },
                        dl_prb_avail,
                        dl_prb_usage,
                        ul_prb_avail: dl_prb_avail,
                        online_users,
                        dl_concurrent_users: dl_concurrent,
                        ul_concurrent_users: ul_concurrent,
                        dl_traffic,
                        ul_traffic,
                        total_traffic: dl_traffic + ul_traffic,
                    });

                    // Throughput histogram and slot series realizing the
                    // latent quality.
                    let time_ratio = (0.82 + 0.15 * quality + rng.random_range(-0.02..0.02))
                        .clamp(0.5, 0.995);
                    let below_share = ((1.0 - quality) / time_ratio).clamp(0.0, 1.0);

                    let zero_traffic = rng.random_range(0.0..1.0) < 0.004;
                    let total_volume = if zero_traffic { 0.0 } else { dl_traffic };

                    let mut volumes = vec![0.0; DEFAULT_BIN_EDGES.len()];
                    if total_volume > 0.0 {
                        let mut below_weights = [0.0f64; 10];
                        for (i, w) in below_weights.iter_mut().enumerate() {
                            *w = (-(i as f64) / 2.5).exp() * rng.random_range(0.6..1.4);
                        }
                        let below_total: f64 = below_weights.iter().sum();
                        for (i, w) in below_weights.iter().enumerate() {
                            volumes[i] = total_volume * below_share * w / below_total;
                        }
                        let mut above_weights = [4.0, 2.0, 1.0, 0.4];
                        for w in above_weights.iter_mut() {
                            *w *= rng.random_range(0.6..1.4);
                        }
                        let above_total: f64 = above_weights.iter().sum();
                        for (i, w) in above_weights.iter().enumerate() {
                            volumes[10 + i] = total_volume * (1.0 - below_share) * w / above_total;
                        }
                    }
                    distributions.insert(
                        cell_name.clone(),
                        ThroughputDistribution::with_default_edges(volumes).expect("valid synth volumes"),
                    );

                    let total_time = rng.random_range(200.0..800.0);
                    let mut slot_times = vec![0.0; SLOT_COUNT];
                    let mut head_weights = [0.0f64; SLOT_COUNT - 1];
                    for (i, w) in head_weights.iter_mut().enumerate() {
                        *w = (SLOT_COUNT - i) as f64 * rng.random_range(0.5..1.5);
                    }
                    let head_total: f64 = head_weights.iter().sum();
                    for (i, w) in head_weights.iter().enumerate() {
                        slot_times[i] = total_time * time_ratio * w / head_total;
                    }
                    slot_times[SLOT_COUNT - 1] = total_time * (1.0 - time_ratio);
                    slots.insert(
                        cell_name,
                        TimeSlotSeries::new(slot_times).expect("valid synth slots"),
                    );
                }
            }
        }
        grids.push(grid);
    }

    SynthOutput {
        dataset: build_dataset(records, splits),
        distributions,
        slots,
        land_use: LandUseMap { grids },
    }
}

/// File names used by [`write_synth_files`] and the pipeline stages.
pub mod files {
    pub const CELLS: &str = "cells.csv";
    pub const SPLIT: &str = "split.csv";
    pub const THROUGHPUT: &str = "throughput.csv";
    pub const SLOTS: &str = "slots.csv";
    pub const LAND_USE: &str = "landuse.grid";
}

/// Write all generated tables in the exact formats the pipeline ingests.
pub fn write_synth_files(output: &SynthOutput, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;

    let cells = File::create(dir.join(files::CELLS))?;
    write_cells(BufWriter::new(cells), &output.dataset.records).map_err(std::io::Error::other)?;

    let split = File::create(dir.join(files::SPLIT))?;
    write_split_manifest(BufWriter::new(split), &output.dataset.splits).map_err(std::io::Error::other)?;

    let mut throughput = BufWriter::new(File::create(dir.join(files::THROUGHPUT))?);
    let bin_headers: Vec<String> = (1..=DEFAULT_BIN_EDGES.len()).map(|i| format!("bin_{i}")).collect();
    writeln!(throughput, "cell_name,{}", bin_headers.join(","))?;
    for (name, dist) in &output.distributions {
        let volumes: Vec<String> = dist.volumes().iter().map(|v| format!("{v}")).collect();
        writeln!(throughput, "{name},{}", volumes.join(","))?;
    }

    let mut slots = BufWriter::new(File::create(dir.join(files::SLOTS))?);
    let slot_headers: Vec<String> = (1..=SLOT_COUNT).map(|i| format!("slot_{i}")).collect();
    writeln!(slots, "cell_name,{}", slot_headers.join(","))?;
    for (name, series) in &output.slots {
        let times: Vec<String> = series.slot_times().iter().map(|t| format!("{t}")).collect();
        writeln!(slots, "{name},{}", times.join(","))?;
    }

    let mut land_use = BufWriter::new(File::create(dir.join(files::LAND_USE))?);
    write_land_use(&mut land_use, &output.land_use)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{filter_eligible, parse_cells_from_reader};
    use crate::kpi::kpi_batch;

    #[test]
    fn deterministic_given_seed() {
        let config = SynthConfig {
            n_cities: 2,
            sites_per_city: 8,
            ..SynthConfig::default()
        };
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a.dataset.records, b.dataset.records);
        assert_eq!(a.distributions, b.distributions);
        assert_eq!(a.slots, b.slots);

        let c = generate(&SynthConfig { seed: 1, ..config });
        assert_ne!(a.dataset.records, c.dataset.records);
    }

    #[test]
    fn sectors_have_circularly_spread_azimuths() {
        let config = SynthConfig {
            n_cities: 1,
            sites_per_city: 6,
            ..SynthConfig::default()
        };
        let output = generate(&config);
        let mut by_site: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &output.dataset.records {
            by_site.entry(&r.site_id).or_default().push(r.azimuth);
        }
        for azimuths in by_site.values() {
            assert_eq!(azimuths.len(), 3);
            for i in 0..3 {
                let d = crate::spatial::circular_diff(azimuths[i], azimuths[(i + 1) % 3]);
                assert!((d - 120.0).abs() <= 24.0, "sector spread {d}");
            }
        }
    }

    #[test]
    fn tables_roundtrip_and_kpis_are_nondegenerate() {
        let config = SynthConfig {
            n_cities: 3,
            sites_per_city: 25,
            ..SynthConfig::default()
        };
        let output = generate(&config);

        // Records survive serialization and validation untouched.
        let mut buffer = Vec::new();
        write_cells(&mut buffer, &output.dataset.records).unwrap();
        let parsed = parse_cells_from_reader(buffer.as_slice()).unwrap();
        assert_eq!(parsed, output.dataset.records);

        // Both splits are populated and disjoint by construction.
        let train = output.dataset.indices_in(Split::Train).len();
        let test = output.dataset.indices_in(Split::Test).len();
        assert!(train > 0 && test > 0);
        assert_eq!(train + test, output.dataset.len());

        // The eligibility filter bites but keeps most cells.
        let (eligible, dropped) = filter_eligible(&output.dataset);
        assert!(dropped > 0, "expected some low-utilization cells");
        assert!(eligible.len() * 10 > output.dataset.len() * 7);

        // KPI distribution: valid, wide, and covering at least 4 of the 5
        // evaluation bins.
        let (kpis, exclusions) = kpi_batch(&output.distributions, &output.slots, 100.0);
        assert!(kpis.len() + exclusions.len() == output.dataset.len());
        assert!(kpis.len() * 100 >= output.dataset.len() * 98);

        let values: Vec<f64> = kpis.values().map(|k| k.y).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt();
        assert!(std > 0.05, "target std {std} too small");
        assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));

        let bins = crate::evaluation::TargetBins::default();
        let mut populated = [false; 5];
        for v in &values {
            populated[bins.bin_of(*v)] = true;
        }
        let bin_count = populated.iter().filter(|p| **p).count();
        assert!(bin_count >= 4, "only {bin_count} target bins populated");
    }

    #[test]
    fn files_are_byte_identical_across_runs() {
        let config = SynthConfig {
            n_cities: 2,
            sites_per_city: 6,
            ..SynthConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_synth_files(&generate(&config), dir_a.path()).unwrap();
        write_synth_files(&generate(&config), dir_b.path()).unwrap();
        for name in [files::CELLS, files::SPLIT, files::THROUGHPUT, files::SLOTS, files::LAND_USE] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
}
