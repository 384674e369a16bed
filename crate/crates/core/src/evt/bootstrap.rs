//! Parametric bootstrap standard errors for fitted tail parameters.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gev::{fit_gev, gev_quantile, GevParams};
use super::gpd::{fit_gpd, gpd_quantile, GpdParams};
use super::EvtError;
use crate::parallel::map_indexed;

pub const MIN_RESAMPLES: usize = 50;
/// Share of refits that must converge.
pub const MIN_SUCCESS_RATE: f64 = 0.8;
/// Below this sample size a parametric bootstrap says nothing useful.
pub const MIN_BOOTSTRAP_SAMPLE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    /// Parameters `[sigma_hat, xi]`.
    Gpd,
    /// Parameters `[mu, sigma, xi]`.
    Gev,
}

/// Fits `data` with `kind`, then refits `n_resamples` samples drawn from the
/// fitted distribution and reports the standard deviation of each parameter.
pub fn bootstrap_se(
    data: &[f64],
    kind: FitKind,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, EvtError> {
    if data.len() < MIN_BOOTSTRAP_SAMPLE {
        return Err(EvtError::BootstrapUnstable(format!(
            "{} observations, need at least {MIN_BOOTSTRAP_SAMPLE}",
            data.len()
        )));
    }
    match kind {
        FitKind::Gpd => {
            let p = fit_gpd(data)?.params;
            bootstrap_gpd(p, data.len(), n_resamples, seed).map(|a| a.to_vec())
        }
        FitKind::Gev => {
            let p = fit_gev(data)?.params;
            bootstrap_gev(p, data.len(), n_resamples, seed).map(|a| a.to_vec())
        }
    }
}

fn resample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn bootstrap_gpd(
    p: GpdParams,
    n: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<[f64; 2], EvtError> {
    check_resamples(n_resamples)?;
    let draws = map_indexed(n_resamples, |r| {
        let mut rng = resample_rng(seed, r);
        let sample: Vec<f64> = (0..n).map(|_| gpd_quantile(p, rng.sample(Open01))).collect();
        fit_gpd(&sample).ok().map(|f| [f.params.sigma_hat, f.params.xi])
    });
    summarize(draws, n_resamples)
}

pub(crate) fn bootstrap_gev(
    p: GevParams,
    n: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<[f64; 3], EvtError> {
    check_resamples(n_resamples)?;
    let draws = map_indexed(n_resamples, |r| {
        let mut rng = resample_rng(seed, r);
        let sample: Vec<f64> = (0..n).map(|_| gev_quantile(p, rng.sample(Open01))).collect();
        fit_gev(&sample).ok().map(|f| [f.params.mu, f.params.sigma, f.params.xi])
    });
    summarize(draws, n_resamples)
}

fn check_resamples(n: usize) -> Result<(), EvtError> {
    if n < MIN_RESAMPLES {
        return Err(EvtError::InvalidArgument(format!(
            "need at least {MIN_RESAMPLES} resamples, got {n}"
        )));
    }
    Ok(())
}

fn summarize<const P: usize>(
    draws: Vec<Option<[f64; P]>>,
    total: usize,
) -> Result<[f64; P], EvtError> {
    let ok: Vec<[f64; P]> = draws
        .into_iter()
        .flatten()
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .collect();
    if (ok.len() as f64) < MIN_SUCCESS_RATE * total as f64 || ok.len() < 2 {
        return Err(EvtError::BootstrapUnstable(format!(
            "{} of {total} refits converged",
            ok.len()
        )));
    }
    let m = ok.len() as f64;
    let mut se = [0.0; P];
    for (j, s) in se.iter_mut().enumerate() {
        let mean = ok.iter().map(|d| d[j]).sum::<f64>() / m;
        *s = (ok.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    }
    Ok(se)
}
