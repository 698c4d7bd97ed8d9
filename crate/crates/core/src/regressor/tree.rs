//! Regression-tree building over quantile-binned features.
//!
//! Features are discretized once per fit into at most 256 threshold bins
//! via weighted quantiles (all distinct-value midpoints when there are few
//! enough). Split search scans per-feature gradient histograms; rows with
//! the missing sentinel are routed by a per-node default direction chosen
//! to maximize gain. Ties break toward the lower feature index, lower
//! threshold, and missing-left, so results do not depend on the parallel
//! schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::is_missing;

pub(crate) const MISSING_BIN: u16 = u16::MAX;
const HESSIAN_FLOOR: f64 = 1e-6;
const MIN_SPLIT_GAIN: f64 = 1e-12;

/// One tree node; `Split.gain` feeds feature importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                    ..
                } => {
                    let v = row[*feature];
                    let go_left = if is_missing(v) { *missing_left } else { v < *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Per-feature binned view of a matrix.
pub(crate) struct BinnedMatrix {
    /// `thresholds[f]` sorted ascending; row bin b means
    /// `thresholds[f][j] <= value` for exactly the first b thresholds.
    pub thresholds: Vec<Vec<f64>>,
    /// Feature-major bins; `MISSING_BIN` marks the sentinel.
    pub bins: Vec<Vec<u16>>,
}

/// Midpoint that is strictly above `a` so that `value < mid` separates `a`
/// from `b` even for adjacent floats.
fn cut_between(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid > a {
        mid
    } else {
        b
    }
}

/// Discretize every feature. Candidate thresholds are midpoints between
/// adjacent distinct values; when a feature has more than `max_bins`
/// distinct values the cuts are chosen at evenly spaced weighted quantiles,
/// which makes duplicated rows and doubled weights interchangeable.
pub(crate) fn bin_matrix(matrix: &FeatureMatrix, weights: &[f64], max_bins: usize) -> BinnedMatrix {
    let n_rows = matrix.n_rows();
    let n_features = matrix.n_cols();
    debug_assert_eq!(weights.len(), n_rows);

    let per_feature: Vec<(Vec<f64>, Vec<u16>)> = (0..n_features)
        .into_par_iter()
        .map(|f| {
            let mut pairs: Vec<(f64, f64)> = (0..n_rows)
                .filter_map(|r| {
                    let v = matrix.get(r, f);
                    if is_missing(v) {
                        None
                    } else {
                        Some((v, weights[r]))
                    }
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            // Merge duplicates, accumulating weight.
            let mut distinct: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
            for (v, w) in pairs {
                match distinct.last_mut() {
                    Some(last) if last.0 == v => last.1 += w,
                    _ => distinct.push((v, w)),
                }
            }

            let thresholds: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| cut_between(w[0].0, w[1].0)).collect()
            } else {
                let total: f64 = distinct.iter().map(|(_, w)| w).sum();
                let mut cuts = Vec::with_capacity(max_bins - 1);
                let mut cumulative = 0.0;
                let mut position = 0usize;
                for k in 1..max_bins {
                    let target = total * k as f64 / max_bins as f64;
                    while position < distinct.len() && cumulative + distinct[position].1 < target {
                        cumulative += distinct[position].1;
                        position += 1;
                    }
                    if position + 1 < distinct.len() {
                        let cut = cut_between(distinct[position].0, distinct[position + 1].0);
                        if cuts.last() != Some(&cut) {
                            cuts.push(cut);
                        }
                    }
                }
                cuts
            };

            let bins: Vec<u16> = (0..n_rows)
                .map(|r| {
                    let v = matrix.get(r, f);
                    if is_missing(v) {
                        MISSING_BIN
                    } else {
                        // Number of thresholds <= v.
                        thresholds.partition_point(|t| *t <= v) as u16
                    }
                })
                .collect();
            (thresholds, bins)
        })
        .collect();

    let mut thresholds = Vec::with_capacity(n_features);
    let mut bins = Vec::with_capacity(n_features);
    for (t, b) in per_feature {
        thresholds.push(t);
        bins.push(b);
    }
    BinnedMatrix { thresholds, bins }
}

pub(crate) struct GrowParams {
    pub depth: usize,
    pub l2_leaf_reg: f64,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold_index: usize,
    missing_left: bool,
    gain: f64,
}

struct NodeStats {
    grad: f64,
    hess: f64,
}

fn leaf_value(stats: &NodeStats, l2: f64) -> f64 {
    stats.grad / (stats.hess.max(HESSIAN_FLOOR) + l2)
}

fn split_score(grad: f64, hess: f64, l2: f64) -> f64 {
    grad * grad / (hess.max(HESSIAN_FLOOR) + l2)
}

/// Best split of one feature over the node rows, from its gradient
/// histogram. Returns the threshold scan in ascending order with strict
/// improvement, so the lowest qualifying threshold wins ties.
#[allow(clippy::too_many_arguments)]
fn best_split_for_feature(
    feature: usize,
    binned: &BinnedMatrix,
    rows: &[u32],
    grad: &[f64],
    hess: &[f64],
    totals: &NodeStats,
    parent_score: f64,
    l2: f64,
) -> Option<SplitChoice> {
    let thresholds = &binned.thresholds[feature];
    if thresholds.is_empty() {
        return None;
    }
    let bins = &binned.bins[feature];
    let n_bins = thresholds.len() + 1;
    let mut g_hist = vec![0.0f64; n_bins];
    let mut h_hist = vec![0.0f64; n_bins];
    let mut g_missing = 0.0f64;
    let mut h_missing = 0.0f64;
    for &r in rows {
        let b = bins[r as usize];
        if b == MISSING_BIN {
            g_missing += grad[r as usize];
            h_missing += hess[r as usize];
        } else {
            g_hist[b as usize] += grad[r as usize];
            h_hist[b as usize] += hess[r as usize];
        }
    }

    let mut best: Option<SplitChoice> = None;
    let mut g_left = 0.0f64;
    let mut h_left = 0.0f64;
    for t in 0..thresholds.len() {
        g_left += g_hist[t];
        h_left += h_hist[t];
        // Missing rows go left or right; evaluate both, preferring left on
        // an exact tie.
        for missing_left in [true, false] {
            let (gl, hl) = if missing_left {
                (g_left + g_missing, h_left + h_missing)
            } else {
                (g_left, h_left)
            };
            let gr = totals.grad - gl;
            let hr = totals.hess - hl;
            if hl <= 0.0 || hr <= 0.0 {
                continue;
            }
            let gain = 0.5 * (split_score(gl, hl, l2) + split_score(gr, hr, l2) - parent_score);
            if gain > MIN_SPLIT_GAIN && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold_index: t,
                    missing_left,
                    gain,
                });
            }
        }
    }
    best
}

/// Grow one depth-limited tree. `grad[r]` must already carry the sample
/// weight (`w * pseudo_gradient`), and `hess[r]` the weight itself.
/// `feature_sets` holds the sampled feature indices per level.
pub(crate) fn grow_tree(
    binned: &BinnedMatrix,
    rows: Vec<u32>,
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    feature_sets: &[Vec<usize>],
) -> Tree {
    struct Pending {
        node: usize,
        rows: Vec<u32>,
        depth: usize,
    }

    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut queue = vec![Pending {
        node: 0,
        rows,
        depth: 0,
    }];

    while let Some(Pending { node, rows, depth }) = queue.pop() {
        let totals = NodeStats {
            grad: rows.iter().map(|&r| grad[r as usize]).sum(),
            hess: rows.iter().map(|&r| hess[r as usize]).sum(),
        };

        let choice = if depth < params.depth {
            let features = &feature_sets[depth];
            let parent_score = split_score(totals.grad, totals.hess, params.l2_leaf_reg);
            let candidates: Vec<Option<SplitChoice>> = features
                .par_iter()
                .map(|&f| {
                    best_split_for_feature(
                        f,
                        binned,
                        &rows,
                        grad,
                        hess,
                        &totals,
                        parent_score,
                        params.l2_leaf_reg,
                    )
                })
                .collect();
            // Sequential reduction in feature order keeps the choice
            // independent of the parallel schedule.
            let mut best: Option<SplitChoice> = None;
            for candidate in candidates.into_iter().flatten() {
                if best.is_none_or(|b| candidate.gain > b.gain) {
                    best = Some(candidate);
                }
            }
            best
        } else {
            None
        };

        match choice {
            None => {
                nodes[node] = Node::Leaf {
                    value: leaf_value(&totals, params.l2_leaf_reg),
                };
            }
            Some(split) => {
                let bins = &binned.bins[split.feature];
                let mut left_rows = Vec::with_capacity(rows.len() / 2);
                let mut right_rows = Vec::with_capacity(rows.len() / 2);
                for &r in &rows {
                    let b = bins[r as usize];
                    let go_left = if b == MISSING_BIN {
                        split.missing_left
                    } else {
                        (b as usize) <= split.threshold_index
                    };
                    if go_left {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }

                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[node] = Node::Split {
                    feature: split.feature,
                    threshold: binned.thresholds[split.feature][split.threshold_index],
                    missing_left: split.missing_left,
                    gain: split.gain,
                    left,
                    right,
                };
                queue.push(Pending {
                    node: left,
                    rows: left_rows,
                    depth: depth + 1,
                });
                queue.push(Pending {
                    node: right,
                    rows: right_rows,
                    depth: depth + 1,
                });
            }
        }
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnSpec;

    fn matrix_1d(values: &[f64]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(vec![ColumnSpec::numeric("x")]);
        for (i, v) in values.iter().enumerate() {
            m.push_row(format!("r{i}"), vec![*v]).unwrap();
        }
        m
    }

    #[test]
    fn binning_small_feature_uses_all_midpoints() {
        let m = matrix_1d(&[1.0, 2.0, 4.0, 4.0]);
        let binned = bin_matrix(&m, &[1.0; 4], 256);
        assert_eq!(binned.thresholds[0], vec![1.5, 3.0]);
        assert_eq!(binned.bins[0], vec![0, 1, 2, 2]);
    }

    #[test]
    fn binning_marks_missing() {
        let m = matrix_1d(&[1.0, crate::MISSING, 3.0]);
        let binned = bin_matrix(&m, &[1.0; 3], 256);
        assert_eq!(binned.bins[0][1], MISSING_BIN);
    }

    #[test]
    fn binning_caps_threshold_count() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = matrix_1d(&values);
        let binned = bin_matrix(&m, &[1.0; 1000], 256);
        assert!(binned.thresholds[0].len() <= 255);
        assert!(binned.thresholds[0].len() >= 200);
    }

    #[test]
    fn weighted_binning_matches_duplicated_rows() {
        // 400 distinct values with the first 100 duplicated, vs the same
        // distinct values with doubled weights: identical cut sets.
        let mut dup_values: Vec<f64> = (0..400).map(|i| i as f64).collect();
        dup_values.extend((0..100).map(|i| i as f64));
        let dup = bin_matrix(&matrix_1d(&dup_values), &vec![1.0; 500], 64);

        let values: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let mut weights = vec![1.0; 400];
        for w in weights.iter_mut().take(100) {
            *w = 2.0;
        }
        let weighted = bin_matrix(&matrix_1d(&values), &weights, 64);
        assert_eq!(dup.thresholds[0], weighted.thresholds[0]);
    }

    #[test]
    fn grows_exact_step_split() {
        let m = matrix_1d(&[-2.0, -1.0, 1.0, 2.0]);
        let binned = bin_matrix(&m, &[1.0; 4], 256);
        // Residuals of a step function after a 0.5 base.
        let grad = vec![-0.5, -0.5, 0.5, 0.5];
        let hess = vec![1.0; 4];
        let tree = grow_tree(
            &binned,
            vec![0, 1, 2, 3],
            &grad,
            &hess,
            &GrowParams {
                depth: 1,
                l2_leaf_reg: 0.0,
            },
            &[vec![0]],
        );
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict_row(&[-5.0]), -0.5);
        assert_eq!(tree.predict_row(&[5.0]), 0.5);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.0),
            other => panic!("expected split at root, got {other:?}"),
        }
    }

    #[test]
    fn zero_gradients_make_single_leaf() {
        let m = matrix_1d(&[1.0, 2.0, 3.0]);
        let binned = bin_matrix(&m, &[1.0; 3], 256);
        let tree = grow_tree(
            &binned,
            vec![0, 1, 2],
            &[0.0; 3],
            &[1.0; 3],
            &GrowParams {
                depth: 3,
                l2_leaf_reg: 0.0,
            },
            &[vec![0], vec![0], vec![0]],
        );
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict_row(&[1.5]), 0.0);
    }
}
