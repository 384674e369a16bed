//! Effect size and bootstrap significance for comparing two sets of runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("both samples must be non-empty")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub cliffs_delta: f64,
    pub magnitude: Magnitude,
    pub bootstrap_ci: (f64, f64),
    pub significant: bool,
}

/// `P(a > b) - P(a < b)` over all pairs.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64, CompareError> {
    if a.is_empty() || b.is_empty() {
        return Err(CompareError::EmptyInput);
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut net: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&y| y < x) as i64;
        let above = (sorted.len() - sorted.partition_point(|&y| y <= x)) as i64;
        net += below - above;
    }
    Ok(net as f64 / (a.len() * b.len()) as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap CI at level `1 - alpha` for `mean(a) - mean(b)`,
/// resampling each sample independently.
pub fn bootstrap_ci(
    a: &[f64],
    b: &[f64],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64), CompareError> {
    if a.is_empty() || b.is_empty() {
        return Err(CompareError::EmptyInput);
    }
    if n_resamples < 100 {
        return Err(CompareError::InvalidArgument(format!(
            "need at least 100 resamples, got {n_resamples}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CompareError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let ma = (0..a.len()).map(|_| a[rng.random_range(0..a.len())]).sum::<f64>() / a.len() as f64;
            let mb = (0..b.len()).map(|_| b[rng.random_range(0..b.len())]).sum::<f64>() / b.len() as f64;
            ma - mb
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    Ok((percentile(&diffs, alpha / 2.0), percentile(&diffs, 1.0 - alpha / 2.0)))
}

/// Cliff's delta with its magnitude label, and the bootstrap CI of the mean
/// difference; significant iff the CI excludes 0.
pub fn bootstrap_test(
    a: &[f64],
    b: &[f64],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<ComparisonResult, CompareError> {
    let delta = cliffs_delta(a, b)?;
    let (lo, hi) = bootstrap_ci(a, b, n_resamples, alpha, seed)?;
    Ok(ComparisonResult {
        cliffs_delta: delta,
        magnitude: Magnitude::of(delta),
        bootstrap_ci: (lo, hi),
        significant: lo > 0.0 || hi < 0.0,
    })
}

/// Mean of each sample, used when summarizing a comparison.
pub fn means(a: &[f64], b: &[f64]) -> (f64, f64) {
    (mean(a), mean(b))
}
