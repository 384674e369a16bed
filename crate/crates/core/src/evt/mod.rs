//! Extreme-value analysis of a sample's upper tail: threshold selection,
//! exponentiality test, GPD/GEV fitting, diagnostics and return levels.

pub mod bootstrap;
pub mod diagnostics;
pub mod gev;
pub mod gpd;
pub mod optimize;
pub mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_se, FitKind};
pub use diagnostics::{
    classify_tail, horizon, qq_diagnostic, return_level, return_level_of, ExceedanceModel,
    Horizon, QqClass, QqDiagnostic, TailType,
};
pub use gev::{fit_gev, gev_cdf, gev_quantile, GevFit, GevParams};
pub use gpd::{fit_gpd, gpd_quantile, GpdFit, GpdParams};
pub use threshold::{
    break_ties, cv_bound, cv_test, cv_test_top, select_threshold, CvOutcome, CvStep, CvTest,
    Threshold, DEGENERACY_TOL,
};

/// Below this magnitude the shape is treated as exactly zero.
pub const XI_ZERO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvtError {
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("all values are equal; no strict exceedance possible")]
    AllEqual,
    #[error("degenerate excesses: need at least two positive, not all equal")]
    DegenerateExcesses,
    #[error("degenerate exceedances: need at least five, not all equal")]
    DegenerateExceedances,
    #[error("optimizer failed to find a feasible maximum")]
    FitDiverged,
    #[error("invalid fit: {0}")]
    InvalidFit(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bootstrap unstable: {0}")]
    BootstrapUnstable(String),
}

/// Bootstrap standard errors of the fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub sigma_hat: f64,
    pub xi_gpd: f64,
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvtFit {
    pub u: f64,
    pub zeta_u: f64,
    pub k: usize,
    pub gpd: GpdParams,
    pub gev: GevParams,
    #[serde(default)]
    pub se: Option<ParamErrors>,
    pub tail_type: TailType,
    pub qq_class: QqClass,
    #[serde(default)]
    pub qq_r2: f64,
    pub horizon: Horizon,
    /// Tied exceedances were spread apart before fitting.
    #[serde(default)]
    pub tie_breaking: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFitConfig {
    pub k_max: usize,
    /// Number of bootstrap resamples; 0 skips the standard errors.
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        TailFitConfig {
            k_max: 50,
            bootstrap_resamples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub fit: EvtFit,
    pub qq: QqDiagnostic,
    /// Exceedances as fitted (after any tie breaking), ascending.
    pub exceedances: Vec<f64>,
}

/// Threshold, GPD and GEV fits, bootstrap errors, classification and horizon
/// for the upper tail of `values`.
///
/// A bootstrap that cannot refit reliably leaves `se` empty and the tail is
/// classified from the point estimate alone.
pub fn fit_tail(values: &[f64], cfg: &TailFitConfig) -> Result<TailFit, EvtError> {
    let t = select_threshold(values, cfg.k_max)?;
    let (exceedances, tie_breaking) = break_ties(&t.exceedances, t.u);
    let excesses: Vec<f64> = exceedances.iter().map(|x| x - t.u).collect();
    let gpd = fit_gpd(&excesses)?;
    let gev = fit_gev(&exceedances)?;
    let k = exceedances.len();

    let se = if cfg.bootstrap_resamples > 0 {
        let g = bootstrap::bootstrap_gpd(gpd.params, k, cfg.bootstrap_resamples, cfg.seed);
        let v = bootstrap::bootstrap_gev(
            gev.params,
            k,
            cfg.bootstrap_resamples,
            cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        );
        match (g, v) {
            (Ok(g), Ok(v)) => Some(ParamErrors {
                sigma_hat: g[0],
                xi_gpd: g[1],
                mu: v[0],
                sigma: v[1],
                xi: v[2],
            }),
            (Err(EvtError::BootstrapUnstable(_)), _) | (_, Err(EvtError::BootstrapUnstable(_))) => {
                None
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    } else {
        None
    };

    let tail_type = classify_tail(gev.params.xi, se.map_or(0.0, |s| s.xi));
    let qq = qq_diagnostic(gev.params, tail_type, &exceedances);
    let zeta_u = k as f64 / values.len() as f64;
    let fit = EvtFit {
        u: t.u,
        zeta_u,
        k,
        gpd: gpd.params,
        gev: gev.params,
        se,
        tail_type,
        qq_class: qq.class,
        qq_r2: qq.r2,
        horizon: horizon(tail_type, qq.class, zeta_u),
        tie_breaking,
    };
    Ok(TailFit {
        fit,
        qq,
        exceedances,
    })
}
