//! Generalized extreme value distribution.

use serde::{Deserialize, Serialize};

use super::gpd::XI_FLOOR;
use super::optimize::{minimize, SimplexOptions};
use super::{EvtError, XI_ZERO};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevFit {
    pub params: GevParams,
    pub log_likelihood: f64,
}

/// `G(z) = exp(-[1 + xi (z - mu) / sigma]^(-1/xi))`, with the Gumbel limit for
/// `|xi| < 1e-9`; outside the support it is 0 below a lower endpoint and 1
/// above an upper one.
pub fn gev_cdf(p: GevParams, z: f64) -> f64 {
    let s = (z - p.mu) / p.sigma;
    if p.xi.abs() < XI_ZERO {
        return (-(-s).exp()).exp();
    }
    let t = 1.0 + p.xi * s;
    if t <= 0.0 {
        return if p.xi > 0.0 { 0.0 } else { 1.0 };
    }
    (-(-(t.ln()) / p.xi).exp()).exp()
}

pub fn gev_log_pdf(p: GevParams, z: f64) -> f64 {
    if !(p.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let s = (z - p.mu) / p.sigma;
    if p.xi.abs() < XI_ZERO {
        return -p.sigma.ln() - s - (-s).exp();
    }
    let a = p.xi * s;
    if a <= -1.0 {
        return f64::NEG_INFINITY;
    }
    let l = a.ln_1p();
    -p.sigma.ln() - (1.0 + 1.0 / p.xi) * l - (-l / p.xi).exp()
}

pub fn gev_pdf(p: GevParams, z: f64) -> f64 {
    gev_log_pdf(p, z).exp()
}

pub fn gev_quantile(p: GevParams, prob: f64) -> f64 {
    let y = -prob.ln();
    if p.xi.abs() < XI_ZERO {
        p.mu - p.sigma * y.ln()
    } else {
        p.mu + p.sigma / p.xi * ((-p.xi * y.ln()).exp() - 1.0)
    }
}

pub fn gev_log_likelihood(values: &[f64], p: GevParams) -> f64 {
    if !(p.sigma > 0.0) || !p.sigma.is_finite() || !p.xi.is_finite() || p.xi <= XI_FLOOR {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0;
    for &z in values {
        let l = gev_log_pdf(p, z);
        if l == f64::NEG_INFINITY {
            return l;
        }
        acc += l;
    }
    acc
}

/// Moment estimates of the Gumbel special case.
pub fn gumbel_moments(values: &[f64]) -> GevParams {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sigma = var.sqrt() * 6f64.sqrt() / std::f64::consts::PI;
    GevParams {
        mu: mean - EULER_GAMMA * sigma,
        sigma,
        xi: 0.0,
    }
}

/// Maximum-likelihood GEV fit.
pub fn fit_gev(values: &[f64]) -> Result<GevFit, EvtError> {
    if values.len() < 5 || values.iter().any(|v| !v.is_finite()) {
        return Err(EvtError::DegenerateExceedances);
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(EvtError::DegenerateExceedances);
    }
    // Standardize so the simplex works on unit-scale parameters.
    let n = values.len() as f64;
    let center = values.iter().sum::<f64>() / n;
    let spread = (values.iter().map(|x| (x - center).powi(2)).sum::<f64>() / n).sqrt();
    let z: Vec<f64> = values.iter().map(|v| (v - center) / spread).collect();

    let init = gumbel_moments(&z);
    let objective = |x: &[f64]| {
        -gev_log_likelihood(
            &z,
            GevParams {
                mu: x[0],
                sigma: x[1].exp(),
                xi: x[2],
            },
        )
    };
    let res = minimize(
        objective,
        &[init.mu, init.sigma.ln(), init.xi],
        &[0.2, 0.2, 0.1],
        SimplexOptions::default(),
    );
    if !res.value.is_finite() {
        return Err(EvtError::FitDiverged);
    }
    let params = GevParams {
        mu: center + spread * res.x[0],
        sigma: spread * res.x[1].exp(),
        xi: res.x[2],
    };
    Ok(GevFit {
        params,
        log_likelihood: gev_log_likelihood(values, params),
    })
}
