//! Label-distribution-smoothing sample weights for imbalanced regression.
//!
//! Targets are histogrammed into equidistant bins, the bin counts are
//! convolved with a discrete Gaussian kernel, and each sample is weighted
//! by the inverse of its bin's smoothed density. Weights are rescaled to
//! mean 1 so weighted and unweighted losses stay comparable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Density floor in counts: keeps weights finite even for bins whose
/// smoothed density collapses.
const DENSITY_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdsConfig {
    /// Number of equidistant histogram bins over `range`.
    pub n_bins: usize,
    /// Gaussian kernel length; must be odd.
    pub kernel_length: usize,
    /// Kernel standard deviation, in bins.
    pub sigma: f64,
    /// Target range covered by the histogram.
    pub range: (f64, f64),
}

impl Default for LdsConfig {
    fn default() -> Self {
        LdsConfig {
            n_bins: 700,
            kernel_length: 7,
            sigma: 2.0,
            range: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdsError {
    #[error("no targets to weight")]
    Empty,
    #[error("kernel length must be odd, got {0}")]
    EvenKernel(usize),
    #[error("need at least as many bins as kernel taps ({kernel} > {bins})")]
    TooFewBins { bins: usize, kernel: usize },
    #[error("target {0} outside configured range")]
    OutOfRange(f64),
    #[error("bad config: {0}")]
    BadConfig(String),
}

/// Normalized Gaussian kernel taps.
fn gaussian_kernel(length: usize, sigma: f64) -> Vec<f64> {
    let half = (length / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Reflect-padded index into `0..n`.
fn reflect(index: isize, n: isize) -> usize {
    let mut i = index;
    // Repeated reflection handles kernels wider than the histogram edge.
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn bin_of(value: f64, config: &LdsConfig) -> usize {
    let (lo, hi) = config.range;
    let width = (hi - lo) / config.n_bins as f64;
    let bin = ((value - lo) / width).floor() as isize;
    bin.clamp(0, config.n_bins as isize - 1) as usize
}

/// Smoothed histogram of the targets: raw counts convolved with the
/// Gaussian kernel under reflect padding.
pub fn smoothed_density(targets: &[f64], config: &LdsConfig) -> Result<Vec<f64>, LdsError> {
    if targets.is_empty() {
        return Err(LdsError::Empty);
    }
    if config.kernel_length.is_multiple_of(2) {
        return Err(LdsError::EvenKernel(config.kernel_length));
    }
    if config.n_bins < config.kernel_length {
        return Err(LdsError::TooFewBins {
            bins: config.n_bins,
            kernel: config.kernel_length,
        });
    }
    let (lo, hi) = config.range;
    if lo >= hi || lo.is_nan() || hi.is_nan() || config.sigma <= 0.0 {
        return Err(LdsError::BadConfig("range must be increasing, sigma positive".into()));
    }
    for &t in targets {
        if !t.is_finite() || t < config.range.0 || t > config.range.1 {
            return Err(LdsError::OutOfRange(t));
        }
    }

    let mut counts = vec![0.0f64; config.n_bins];
    for &t in targets {
        counts[bin_of(t, config)] += 1.0;
    }

    let kernel = gaussian_kernel(config.kernel_length, config.sigma);
    let half = (config.kernel_length / 2) as isize;
    let n = config.n_bins as isize;
    let mut smoothed = vec![0.0f64; config.n_bins];
    for (i, out) in smoothed.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, tap) in kernel.iter().enumerate() {
            let j = reflect(i as isize + k as isize - half, n);
            acc += tap * counts[j];
        }
        *out = acc;
    }
    Ok(smoothed)
}

/// One weight per target: inverse smoothed density of the target's bin,
/// rescaled to mean 1.
pub fn lds_weights(targets: &[f64], config: &LdsConfig) -> Result<Vec<f64>, LdsError> {
    let raw = lds_weights_raw(targets, config)?;
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

/// Raw (pre-normalization) weights; exposed for diagnostics and tests.
pub fn lds_weights_raw(targets: &[f64], config: &LdsConfig) -> Result<Vec<f64>, LdsError> {
    let smoothed = smoothed_density(targets, config)?;
    Ok(targets
        .iter()
        .map(|&t| 1.0 / smoothed[bin_of(t, config)].max(DENSITY_FLOOR))
        .collect())
}
