//! Planar geometry: projection, azimuth math, spatial indexing, neighbor
//! boxes, and interference rules.
//!
//! Cells are treated as points in a flat grid with zero height. Each
//! city-operator group gets its own local frame (equirectangular projection
//! about the group centroid), which keeps planar distortion negligible at
//! city scale. Azimuths are degrees clockwise from north; the planar frame
//! is x east, y north.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{CellRecord, Dataset};

/// Meters per degree of latitude for the local projection.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// The neighbor box center sits this far ahead of the cell, along its
/// azimuth.
pub const BOX_CENTER_AHEAD_M: f64 = 500.0;

/// Corner distance of the neighbor box from its center.
pub const BOX_CORNER_M: f64 = 1200.0;

/// Same-site cells interfere when their azimuths differ by no more than
/// this (rule R1).
pub const R1_MAX_AZIMUTH_DIFF_DEG: f64 = 100.0;

/// Different-site cells interfere within this distance (rule R2).
pub const R2_MAX_DISTANCE_M: f64 = 150.0;

/// Mutual field-of-view interference reaches out to this distance (rule R3).
pub const R3_MAX_DISTANCE_M: f64 = 1000.0;

/// Half-angle of a cell's field of view about its azimuth.
pub const FOV_HALF_ANGLE_DEG: f64 = 60.0;

/// Default spatial-index bucket size; a performance knob only.
pub const DEFAULT_BUCKET_SIZE_M: f64 = 300.0;

/// Tolerance for boundary-inclusive containment tests, in meters.
const CONTAINS_EPS_M: f64 = 1e-9;

/// A point in a local planar frame: meters east and north of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("bearing undefined for coincident points")]
    CoincidentPoints,
}

/// Equirectangular local projection of geodetic coordinates.
pub fn project(longitude: f64, latitude: f64, origin_lon: f64, origin_lat: f64) -> PlanarPoint {
    let x = (longitude - origin_lon) * origin_lat.to_radians().cos() * METERS_PER_DEGREE;
    let y = (latitude - origin_lat) * METERS_PER_DEGREE;
    PlanarPoint { x, y }
}

/// Inverse of [`project`]: planar meters back to geodetic degrees.
pub fn unproject(point: PlanarPoint, origin_lon: f64, origin_lat: f64) -> (f64, f64) {
    let lon = origin_lon + point.x / (origin_lat.to_radians().cos() * METERS_PER_DEGREE);
    let lat = origin_lat + point.y / METERS_PER_DEGREE;
    (lon, lat)
}

/// Circular absolute difference of two angles in degrees, in [0, 180].
pub fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// Clockwise angle from north of the vector `to - from`, in [0, 360).
pub fn bearing(from: PlanarPoint, to: PlanarPoint) -> Result<f64, SpatialError> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(SpatialError::CoincidentPoints);
    }
    let mut deg = dx.atan2(dy).to_degrees();
    if deg < 0.0 {
        deg += 360.0;
    }
    if deg >= 360.0 {
        deg = 0.0;
    }
    Ok(deg)
}

/// The reverse direction of a bearing.
pub fn back_bearing(bearing_deg: f64) -> f64 {
    (bearing_deg + 180.0) % 360.0
}

/// A square rotated to a cell's azimuth. Corners sit [`BOX_CORNER_M`] from
/// the center along azimuth + {45, 135, 225, 315}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedSquare {
    pub center: PlanarPoint,
    pub half_side: f64,
    /// Degrees clockwise from north.
    pub rotation: f64,
}

impl OrientedSquare {
    /// Boundary-inclusive containment. The point is rotated into the box
    /// frame (azimuth mapped to north) and compared against the half side
    /// on both axes.
    pub fn contains(&self, point: PlanarPoint) -> bool {
        let dx = point.x - self.center.x;
        let dy = point.y - self.center.y;
        let (sin_a, cos_a) = self.rotation.to_radians().sin_cos();
        let local_x = dx * cos_a - dy * sin_a;
        let local_y = dx * sin_a + dy * cos_a;
        local_x.abs() <= self.half_side + CONTAINS_EPS_M && local_y.abs() <= self.half_side + CONTAINS_EPS_M
    }

    /// The four corners, at rotation + {45, 135, 225, 315} from the center.
    pub fn corners(&self) -> [PlanarPoint; 4] {
        let corner_distance = self.half_side * std::f64::consts::SQRT_2;
        [45.0, 135.0, 225.0, 315.0].map(|offset| {
            let angle = (self.rotation + offset).to_radians();
            PlanarPoint {
                x: self.center.x + corner_distance * angle.sin(),
                y: self.center.y + corner_distance * angle.cos(),
            }
        })
    }

    /// Axis-aligned half extent (identical on x and y for a square).
    fn aabb_half_extent(&self) -> f64 {
        let (sin_a, cos_a) = self.rotation.to_radians().sin_cos();
        self.half_side * (sin_a.abs() + cos_a.abs())
    }
}

/// The neighborhood box of a cell: centered [`BOX_CENTER_AHEAD_M`] ahead of
/// the cell along its azimuth, rotated to the azimuth, corners
/// [`BOX_CORNER_M`] from the center.
pub fn neighbor_box(position: PlanarPoint, azimuth_deg: f64) -> OrientedSquare {
    let (sin_a, cos_a) = azimuth_deg.to_radians().sin_cos();
    OrientedSquare {
        center: PlanarPoint {
            x: position.x + BOX_CENTER_AHEAD_M * sin_a,
            y: position.y + BOX_CENTER_AHEAD_M * cos_a,
        },
        half_side: BOX_CORNER_M / std::f64::consts::SQRT_2,
        rotation: azimuth_deg,
    }
}

/// Which interference rule admitted a neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterferenceRule {
    /// Same site, azimuth difference <= 100 degrees.
    R1,
    /// Different site, distance <= 150 m.
    R2,
    /// Distance in (150, 1000] m with mutual field of view.
    R3,
}

impl fmt::Display for InterferenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterferenceRule::R1 => write!(f, "R1"),
            InterferenceRule::R2 => write!(f, "R2"),
            InterferenceRule::R3 => write!(f, "R3"),
        }
    }
}

/// A cell as the spatial layer sees it.
#[derive(Debug, Clone)]
pub struct SpatialCell {
    /// Index into the source record collection.
    pub record_index: usize,
    pub point: PlanarPoint,
    pub azimuth: f64,
    pub site_id: String,
}

/// Interference classification between an observing cell and one neighbor.
/// Checked in rule order; the first satisfied rule is reported.
pub fn interference_rule(cell: &SpatialCell, other: &SpatialCell) -> Option<InterferenceRule> {
    let same_site = cell.site_id == other.site_id;
    if same_site && circular_diff(cell.azimuth, other.azimuth) <= R1_MAX_AZIMUTH_DIFF_DEG {
        return Some(InterferenceRule::R1);
    }
    let distance = cell.point.distance(&other.point);
    if !same_site && distance <= R2_MAX_DISTANCE_M {
        return Some(InterferenceRule::R2);
    }
    if distance > R2_MAX_DISTANCE_M && distance <= R3_MAX_DISTANCE_M {
        // Mutual field of view: each cell sees the other within +-60 degrees
        // of its own azimuth.
        let Ok(forward) = bearing(cell.point, other.point) else {
            return None;
        };
        let backward = back_bearing(forward);
        if circular_diff(forward, cell.azimuth) <= FOV_HALF_ANGLE_DEG
            && circular_diff(backward, other.azimuth) <= FOV_HALF_ANGLE_DEG
        {
            return Some(InterferenceRule::R3);
        }
    }
    None
}

/// Uniform-grid index over planar points. Immutable after build; queries
/// return exact results (grid candidates are filtered exactly).
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    bucket_size: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
    points: Vec<PlanarPoint>,
}

impl SpatialIndex {
    pub fn build(points: Vec<PlanarPoint>, bucket_size: f64) -> Self {
        assert!(bucket_size > 0.0, "bucket size must be positive");
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, bucket_size)).or_default().push(i as u32);
        }
        SpatialIndex {
            bucket_size,
            buckets,
            points,
        }
    }

    fn key(p: &PlanarPoint, bucket_size: f64) -> (i64, i64) {
        (
            (p.x / bucket_size).floor() as i64,
            (p.y / bucket_size).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points with axis coordinates inside the closed rectangle
    /// `[min, max]`, unfiltered beyond the rectangle itself. Sorted.
    fn rect_candidates(&self, min: PlanarPoint, max: PlanarPoint) -> Vec<u32> {
        let lo = Self::key(&min, self.bucket_size);
        let hi = Self::key(&max, self.bucket_size);
        let mut out = Vec::new();
        for bx in lo.0..=hi.0 {
            for by in lo.1..=hi.1 {
                if let Some(bucket) = self.buckets.get(&(bx, by)) {
                    out.extend_from_slice(bucket);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Exactly the points within distance `r` of `center` (inclusive),
    /// sorted by index.
    pub fn radius_query(&self, center: PlanarPoint, r: f64) -> Vec<usize> {
        let min = PlanarPoint::new(center.x - r, center.y - r);
        let max = PlanarPoint::new(center.x + r, center.y + r);
        self.rect_candidates(min, max)
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| self.points[i].distance(&center) <= r)
            .collect()
    }

    /// Exactly the points inside the oriented square, sorted by index.
    pub fn box_query(&self, square: &OrientedSquare) -> Vec<usize> {
        let extent = square.aabb_half_extent() + CONTAINS_EPS_M;
        let min = PlanarPoint::new(square.center.x - extent, square.center.y - extent);
        let max = PlanarPoint::new(square.center.x + extent, square.center.y + extent);
        self.rect_candidates(min, max)
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| square.contains(self.points[i]))
            .collect()
    }
}

/// All cells of one city-operator in a shared planar frame, indexed for
/// neighborhood queries. Built from the unfiltered dataset: low-utilization
/// cells still count as neighbors.
#[derive(Debug, Clone)]
pub struct CellFrame {
    pub city: String,
    pub operator: String,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cells: Vec<SpatialCell>,
    index: SpatialIndex,
}

impl CellFrame {
    /// Neighbors of the cell at frame position `i`: every other cell of the
    /// frame inside its neighbor box (boundary inclusive). Sorted by frame
    /// position.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let cell = &self.cells[i];
        let square = neighbor_box(cell.point, cell.azimuth);
        self.index
            .box_query(&square)
            .into_iter()
            .filter(|&j| j != i)
            .collect()
    }

    /// The subset of `neighbors` that interferes with cell `i`, tagged with
    /// the first rule that admitted each.
    pub fn interferers(&self, i: usize, neighbors: &[usize]) -> Vec<(usize, InterferenceRule)> {
        let cell = &self.cells[i];
        neighbors
            .iter()
            .filter_map(|&j| interference_rule(cell, &self.cells[j]).map(|rule| (j, rule)))
            .collect()
    }
}

/// Group a dataset into per-city-operator frames. Frame origins are the
/// group centroids; frames are ordered by (city, operator).
pub fn build_frames(dataset: &Dataset) -> Vec<CellFrame> {
    build_frames_with_bucket(dataset, DEFAULT_BUCKET_SIZE_M)
}

pub fn build_frames_with_bucket(dataset: &Dataset, bucket_size: f64) -> Vec<CellFrame> {
    let mut groups: HashMap<(String, String), Vec<usize>> = HashMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        groups
            .entry((r.city.clone(), r.operator.clone()))
            .or_default()
            .push(i);
    }
    let mut keys: Vec<(String, String)> = groups.keys().cloned().collect();
    keys.sort();

    keys.into_iter()
        .map(|key| {
            let indices = &groups[&key];
            let n = indices.len() as f64;
            let origin_lon = indices.iter().map(|&i| dataset.records[i].longitude).sum::<f64>() / n;
            let origin_lat = indices.iter().map(|&i| dataset.records[i].latitude).sum::<f64>() / n;
            let cells: Vec<SpatialCell> = indices
                .iter()
                .map(|&i| {
                    let r: &CellRecord = &dataset.records[i];
                    SpatialCell {
                        record_index: i,
                        point: project(r.longitude, r.latitude, origin_lon, origin_lat),
                        azimuth: r.azimuth,
                        site_id: r.site_id.clone(),
                    }
                })
                .collect();
            let index = SpatialIndex::build(cells.iter().map(|c| c.point).collect(), bucket_size);
            CellFrame {
                city: key.0,
                operator: key.1,
                origin_lon,
                origin_lat,
                cells,
                index,
            }
        })
        .collect()
}

/// A neighbor seen from one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRef {
    /// Index into the source dataset.
    pub record_index: usize,
    pub distance_m: f64,
    /// 0.0 for coincident co-sited cells, where the bearing is undefined.
    pub bearing_deg: f64,
}

/// An interfering neighbor, tagged with the rule that admitted it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfererRef {
    pub record_index: usize,
    pub distance_m: f64,
    pub rule: InterferenceRule,
}

/// Neighborhood relations of every record in a dataset, indexed by record
/// position.
#[derive(Debug, Clone)]
pub struct NeighborhoodMap {
    pub neighbors: Vec<Vec<NeighborRef>>,
    pub interferers: Vec<Vec<InterfererRef>>,
}

/// Neighbors and interferers for the whole dataset. Per-cell work runs in
/// parallel; results are ordered by record index regardless of schedule.
pub fn compute_neighborhoods(dataset: &Dataset) -> NeighborhoodMap {
    use rayon::prelude::*;

    let frames = build_frames(dataset);
    let mut neighbors = vec![Vec::new(); dataset.len()];
    let mut interferers = vec![Vec::new(); dataset.len()];
    for frame in &frames {
        let per_cell: Vec<(Vec<NeighborRef>, Vec<InterfererRef>)> = (0..frame.cells.len())
            .into_par_iter()
            .map(|i| {
                let cell = &frame.cells[i];
                let neighbor_positions = frame.neighbors(i);
                let interferer_rules = frame.interferers(i, &neighbor_positions);
                let neighbor_refs = neighbor_positions
                    .iter()
                    .map(|&j| {
                        let other = &frame.cells[j];
                        NeighborRef {
                            record_index: other.record_index,
                            distance_m: cell.point.distance(&other.point),
                            bearing_deg: bearing(cell.point, other.point).unwrap_or(0.0),
                        }
                    })
                    .collect();
                let interferer_refs = interferer_rules
                    .into_iter()
                    .map(|(j, rule)| {
                        let other = &frame.cells[j];
                        InterfererRef {
                            record_index: other.record_index,
                            distance_m: cell.point.distance(&other.point),
                            rule,
                        }
                    })
                    .collect();
                (neighbor_refs, interferer_refs)
            })
            .collect();
        for (i, (n, f)) in per_cell.into_iter().enumerate() {
            let record = frame.cells[i].record_index;
            neighbors[record] = n;
            interferers[record] = f;
        }
    }
    NeighborhoodMap {
        neighbors,
        interferers,
    }
}

/// One row of the neighbor export: everything needed to redraw the
/// neighborhood map of a cell.
#[derive(Debug, Clone, Serialize)]
pub struct NeighborEdge {
    pub cell_name: String,
    pub neighbor_name: String,
    pub distance_m: f64,
    pub bearing_deg: f64,
    pub is_interferer: bool,
    /// Empty unless `is_interferer`.
    pub rule: String,
}

/// Neighbor/interferer edges for every cell of the dataset, in record then
/// neighbor order.
pub fn neighbor_edges(dataset: &Dataset, map: &NeighborhoodMap) -> Vec<NeighborEdge> {
    let mut edges = Vec::new();
    for (i, record) in dataset.records.iter().enumerate() {
        let rules: HashMap<usize, InterferenceRule> = map.interferers[i]
            .iter()
            .map(|f| (f.record_index, f.rule))
            .collect();
        for n in &map.neighbors[i] {
            let rule = rules.get(&n.record_index);
            edges.push(NeighborEdge {
                cell_name: record.cell_name.clone(),
                neighbor_name: dataset.records[n.record_index].cell_name.clone(),
                distance_m: n.distance_m,
                bearing_deg: n.bearing_deg,
                is_interferer: rule.is_some(),
                rule: rule.map(|r| r.to_string()).unwrap_or_default(),
            });
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let p = project(10.0, 50.0, 10.0, 50.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));

        let p = project(10.0, 50.001, 10.0, 50.0);
        assert_abs_diff_eq!(p.y, 111.32, epsilon = 1e-9);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);

        let p = project(10.001, 60.0, 10.0, 60.0);
        assert_abs_diff_eq!(p.x, 55.66, epsilon = 1e-9);
    }

    #[test]
    fn unproject_inverts_project() {
        let (lon, lat) = unproject(project(32.85, 39.93, 32.8, 39.9), 32.8, 39.9);
        assert_abs_diff_eq!(lon, 32.85, epsilon = 1e-12);
        assert_abs_diff_eq!(lat, 39.93, epsilon = 1e-12);
    }

    #[test]
    fn circular_diff_examples() {
        assert_eq!(circular_diff(350.0, 10.0), 20.0);
        assert_eq!(circular_diff(120.0, 120.0), 0.0);
        assert_eq!(circular_diff(0.0, 180.0), 180.0);
    }

    #[test]
    fn bearing_examples() {
        let origin = PlanarPoint::new(0.0, 0.0);
        assert_eq!(bearing(origin, PlanarPoint::new(0.0, 100.0)).unwrap(), 0.0);
        assert_eq!(bearing(origin, PlanarPoint::new(100.0, 0.0)).unwrap(), 90.0);
        assert_abs_diff_eq!(
            bearing(origin, PlanarPoint::new(100.0, 100.0)).unwrap(),
            45.0,
            epsilon = 1e-12
        );
        assert_eq!(bearing(origin, origin), Err(SpatialError::CoincidentPoints));
        assert_eq!(back_bearing(45.0), 225.0);
        assert_eq!(back_bearing(300.0), 120.0);
    }

    #[test]
    fn box_center_and_corner_geometry() {
        let square = neighbor_box(PlanarPoint::new(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(square.center.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(square.center.y, 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(square.half_side, 848.528137423857, epsilon = 1e-9);

        // Corner along azimuth 45 from the center.
        let corners = square.corners();
        assert_abs_diff_eq!(corners[0].x, 848.528137423857, epsilon = 1e-6);
        assert_abs_diff_eq!(corners[0].y, 1348.528137423857, epsilon = 1e-6);
        for corner in corners {
            assert_abs_diff_eq!(corner.distance(&square.center), 1200.0, epsilon = 1e-9);
        }

        // Azimuth 120: center at 500 * (sin 120, cos 120).
        let square = neighbor_box(PlanarPoint::new(0.0, 0.0), 120.0);
        assert_abs_diff_eq!(square.center.x, 433.0127018922194, epsilon = 1e-6);
        assert_abs_diff_eq!(square.center.y, -250.0, epsilon = 1e-6);
    }

    #[test]
    fn box_containment_is_boundary_inclusive() {
        let square = neighbor_box(PlanarPoint::new(0.0, 0.0), 73.0);
        assert!(square.contains(square.center));
        for corner in square.corners() {
            assert!(square.contains(corner));
        }
        // Just beyond a corner is outside.
        let corner = square.corners()[0];
        let dx = corner.x - square.center.x;
        let dy = corner.y - square.center.y;
        let outside = PlanarPoint::new(square.center.x + dx * 1.001, square.center.y + dy * 1.001);
        assert!(!square.contains(outside));
    }

    fn cell(i: usize, x: f64, y: f64, azimuth: f64, site: &str) -> SpatialCell {
        SpatialCell {
            record_index: i,
            point: PlanarPoint::new(x, y),
            azimuth,
            site_id: site.to_string(),
        }
    }

    #[test]
    fn r1_same_site_azimuth() {
        let a = cell(0, 0.0, 0.0, 10.0, "S1");
        let b = cell(1, 1.0, 1.0, 100.0, "S1");
        assert_eq!(interference_rule(&a, &b), Some(InterferenceRule::R1));
        let c = cell(2, 1.0, 1.0, 115.0, "S1");
        assert_eq!(interference_rule(&a, &c), None);
        // Wraparound: azimuths 350 and 10 are 20 degrees apart.
        let d = cell(3, 1.0, 1.0, 350.0, "S1");
        let e = cell(4, 2.0, 2.0, 10.0, "S1");
        assert_eq!(interference_rule(&d, &e), Some(InterferenceRule::R1));
    }

    #[test]
    fn r2_close_different_site() {
        let a = cell(0, 0.0, 0.0, 0.0, "S1");
        let b = cell(1, 100.0, 0.0, 207.0, "S2");
        assert_eq!(interference_rule(&a, &b), Some(InterferenceRule::R2));
        // Exactly 150 m still counts as R2.
        let c = cell(2, 150.0, 0.0, 37.0, "S3");
        assert_eq!(interference_rule(&a, &c), Some(InterferenceRule::R2));
        // Same site at 100 m with misaligned azimuths is not admitted via R2.
        let d = cell(3, 100.0, 0.0, 180.0, "S1");
        assert_eq!(interference_rule(&a, &d), None);
    }

    #[test]
    fn r3_mutual_field_of_view() {
        // Facing each other along the join line, 500 m apart.
        let a = cell(0, 0.0, 0.0, 0.0, "S1");
        let b = cell(1, 0.0, 500.0, 180.0, "S2");
        assert_eq!(interference_rule(&a, &b), Some(InterferenceRule::R3));

        // Same pair rotated 90 degrees: neither sees the other.
        let a90 = cell(0, 0.0, 0.0, 90.0, "S1");
        let b90 = cell(1, 0.0, 500.0, 270.0, "S2");
        assert_eq!(interference_rule(&a90, &b90), None);

        // One-sided view is not enough.
        let b_side = cell(1, 0.0, 500.0, 90.0, "S2");
        assert_eq!(interference_rule(&a, &b_side), None);

        // Beyond 1000 m the rule no longer applies.
        let far = cell(1, 0.0, 1001.0, 180.0, "S2");
        assert_eq!(interference_rule(&a, &far), None);
    }

    #[test]
    fn index_radius_query_is_exact_and_inclusive() {
        let points = vec![
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(10.0, 0.0),
            PlanarPoint::new(0.0, 10.0),
            PlanarPoint::new(7.0, 7.0),
        ];
        let index = SpatialIndex::build(points, 5.0);
        let center = PlanarPoint::new(0.0, 0.0);
        assert_eq!(index.radius_query(center, 1.0), vec![0]);
        // Distance exactly 10 is included.
        assert_eq!(index.radius_query(center, 10.0), vec![0, 1, 2, 3]);
        assert_eq!(index.radius_query(center, 9.8), vec![0]);
    }

    fn record(name: &str, site: &str, operator: &str, lon: f64, lat: f64, azimuth: f64) -> crate::data_model::CellRecord {
        crate::data_model::CellRecord {
            cell_name: name.into(),
            site_id: site.into(),
            operator: operator.into(),
            city: "TestCity".into(),
            longitude: lon,
            latitude: lat,
            azimuth,
            height: 25.0,
            duplex_mode: crate::data_model::DuplexMode::Tdd,
            dl_narfcn: 636666,
            frequency_band: "n78".into(),
            dl_bandwidth: 100.0,
            txrx_mode: "4T4R".into(),
            subframe_assignment: "SA2".into(),
            special_patterns: "SSP5".into(),
            dl_prb_avail: 273.0,
            dl_prb_usage: 50.0,
            ul_prb_avail: 273.0,
            online_users: 100.0,
            dl_concurrent_users: 10.0,
            ul_concurrent_users: 5.0,
            dl_traffic: 1000.0,
            ul_traffic: 100.0,
            total_traffic: 1100.0,
        }
    }

    #[test]
    fn box_reaches_behind_the_cell() {
        // The box center sits 500 m ahead but the half side is ~848 m, so
        // coverage extends ~348 m behind the cell.
        let square = neighbor_box(PlanarPoint::new(0.0, 0.0), 0.0);
        let behind = PlanarPoint::new(0.0, -200.0);
        assert!(square.contains(behind));
        let diff = circular_diff(bearing(PlanarPoint::new(0.0, 0.0), behind).unwrap(), 0.0);
        assert!(diff > 90.0, "the point is strictly behind the azimuth");
        assert!(!square.contains(PlanarPoint::new(0.0, -400.0)));
    }

    #[test]
    fn neighborhoods_respect_operator_and_box() {
        // A faces north; B sits 200 m north of A (inside the box); C is the
        // same position as B but a different operator; D is 3 km away.
        let origin = (32.8, 39.9);
        let offset = |dx: f64, dy: f64| unproject(PlanarPoint::new(dx, dy), origin.0, origin.1);
        let (b_lon, b_lat) = offset(0.0, 200.0);
        let (d_lon, d_lat) = offset(0.0, 3000.0);
        let dataset = crate::data_model::build_dataset(
            vec![
                record("A", "S1", "OpA", origin.0, origin.1, 0.0),
                record("B", "S2", "OpA", b_lon, b_lat, 180.0),
                record("C", "S3", "OpB", b_lon, b_lat, 180.0),
                record("D", "S4", "OpA", d_lon, d_lat, 0.0),
            ],
            Default::default(),
        );
        let map = compute_neighborhoods(&dataset);
        let a_neighbors: Vec<usize> = map.neighbors[0].iter().map(|n| n.record_index).collect();
        assert_eq!(a_neighbors, vec![1], "same-operator in-box cell only");
        // B at 200 m facing A: mutual field of view, rule R3.
        assert_eq!(map.interferers[0].len(), 1);
        assert_eq!(map.interferers[0][0].rule, InterferenceRule::R3);
        assert!((map.interferers[0][0].distance_m - 200.0).abs() < 1e-6);

        let edges = neighbor_edges(&dataset, &map);
        assert!(edges.iter().any(|e| e.cell_name == "A" && e.neighbor_name == "B" && e.rule == "R3"));
        assert!(!edges.iter().any(|e| e.neighbor_name == "C"));
    }

    proptest! {
        #[test]
        fn radius_query_matches_brute_force(
            coordinates in proptest::collection::vec((-2000.0f64..2000.0, -2000.0f64..2000.0), 1..200),
            center in (-2000.0f64..2000.0, -2000.0f64..2000.0),
            r in 1.0f64..1500.0,
        ) {
            let points: Vec<PlanarPoint> = coordinates.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect();
            let index = SpatialIndex::build(points.clone(), DEFAULT_BUCKET_SIZE_M);
            let center = PlanarPoint::new(center.0, center.1);
            let expected: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, p)| p.distance(&center) <= r)
                .map(|(i, _)| i)
                .collect();
            prop_assert_eq!(index.radius_query(center, r), expected);
        }

        #[test]
        fn circular_diff_is_symmetric_and_bounded(a in -720.0f64..720.0, b in -720.0f64..720.0) {
            let d = circular_diff(a, b);
            prop_assert!((0.0..=180.0).contains(&d));
            prop_assert_eq!(d, circular_diff(b, a));
            prop_assert!(circular_diff(a + 360.0, b) - d < 1e-9);
        }
    }
}
