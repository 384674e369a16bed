//! Generalized Pareto model for threshold excesses.

use serde::{Deserialize, Serialize};

use super::optimize::{minimize, SimplexOptions};
use super::{EvtError, XI_ZERO};

/// Shapes at or below this are excluded: the likelihood is unbounded there.
pub(crate) const XI_FLOOR: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub sigma_hat: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub params: GpdParams,
    pub log_likelihood: f64,
    /// Starting point of the optimizer.
    pub initial: GpdParams,
    pub initial_log_likelihood: f64,
}

/// Log-likelihood of `excesses` (all > 0). `-inf` outside the parameter space
/// or when any excess violates `1 + xi t / sigma > 0`.
pub fn gpd_log_likelihood(excesses: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || !sigma.is_finite() || !xi.is_finite() || xi <= XI_FLOOR {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    if xi.abs() < XI_ZERO {
        return -n * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &t in excesses {
        let a = xi * t / sigma;
        if a <= -1.0 {
            return f64::NEG_INFINITY;
        }
        acc += a.ln_1p();
    }
    -n * sigma.ln() - (1.0 + 1.0 / xi) * acc
}

/// Quantile of the excess distribution at probability `p`.
pub fn gpd_quantile(p: GpdParams, prob: f64) -> f64 {
    if p.xi.abs() < XI_ZERO {
        -p.sigma_hat * (-prob).ln_1p()
    } else {
        p.sigma_hat / p.xi * ((-p.xi * (-prob).ln_1p()).exp() - 1.0)
    }
}

pub fn gpd_cdf(p: GpdParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if p.xi.abs() < XI_ZERO {
        return 1.0 - (-t / p.sigma_hat).exp();
    }
    let a = 1.0 + p.xi * t / p.sigma_hat;
    if a <= 0.0 {
        return 1.0;
    }
    1.0 - (-(a.ln()) / p.xi).exp()
}

/// Probability-weighted-moments estimate, falling back to the exponential
/// fit when the estimate is infeasible for the sample.
pub fn gpd_initial(excesses: &[f64]) -> GpdParams {
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let exponential = GpdParams {
        sigma_hat: mean,
        xi: 0.0,
    };
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let a1 = sorted
        .iter()
        .enumerate()
        .map(|(j, x)| (1.0 - (j as f64 + 1.0 - 0.35) / n) * x)
        .sum::<f64>()
        / n;
    let denom = mean - 2.0 * a1;
    let k = mean / denom - 2.0;
    let sigma = 2.0 * mean * a1 / denom;
    let pwm = GpdParams {
        sigma_hat: sigma,
        xi: -k,
    };
    if sigma.is_finite() && sigma > 0.0 && gpd_log_likelihood(excesses, pwm.sigma_hat, pwm.xi).is_finite() {
        pwm
    } else {
        exponential
    }
}

/// Maximum-likelihood GPD fit of positive excesses.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit, EvtError> {
    if excesses.len() < 2 || excesses.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(EvtError::DegenerateExcesses);
    }
    let first = excesses[0];
    if excesses.iter().all(|&t| t == first) {
        return Err(EvtError::DegenerateExcesses);
    }

    // Work on excesses divided by their mean so that the simplex tolerance
    // is independent of the measurement scale.
    let n = excesses.len() as f64;
    let scale = excesses.iter().sum::<f64>() / n;
    let scaled: Vec<f64> = excesses.iter().map(|t| t / scale).collect();

    let initial = gpd_initial(excesses);
    let initial_log_likelihood = gpd_log_likelihood(excesses, initial.sigma_hat, initial.xi);
    let x0 = [(initial.sigma_hat / scale).ln(), initial.xi];
    let objective = |x: &[f64]| -gpd_log_likelihood(&scaled, x[0].exp(), x[1]);
    let res = minimize(objective, &x0, &[0.2, 0.1], SimplexOptions::default());
    if !res.value.is_finite() {
        return Err(EvtError::FitDiverged);
    }
    let params = GpdParams {
        sigma_hat: res.x[0].exp() * scale,
        xi: res.x[1],
    };
    let mut log_likelihood = gpd_log_likelihood(excesses, params.sigma_hat, params.xi);
    let (params, log_likelihood) = if log_likelihood >= initial_log_likelihood {
        (params, log_likelihood)
    } else {
        // Rescaling round-off can leave the optimum a hair below the start.
        log_likelihood = initial_log_likelihood;
        (initial, log_likelihood)
    };
    Ok(GpdFit {
        params,
        log_likelihood,
        initial,
        initial_log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln() / 2.0)
            .collect();
        let fit = fit_gpd(&xs).unwrap();
        // the exponential MLE of the scale is the sample mean
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02);
        assert!(fit.params.xi.abs() <= 0.05, "{:?}", fit.params);
        assert!((0.48..=0.52).contains(&fit.params.sigma_hat), "{:?}", fit.params);
        assert!(fit.log_likelihood >= fit.initial_log_likelihood);
    }

    #[test]
    fn all_equal_is_degenerate() {
        assert!(matches!(fit_gpd(&[0.3; 10]), Err(EvtError::DegenerateExcesses)));
        assert!(matches!(fit_gpd(&[0.3]), Err(EvtError::DegenerateExcesses)));
        assert!(matches!(fit_gpd(&[0.3, -0.1]), Err(EvtError::DegenerateExcesses)));
    }

    #[test]
    fn support_constraint() {
        assert_eq!(gpd_log_likelihood(&[1.0, 3.0], 1.0, -0.5), f64::NEG_INFINITY);
        assert!(gpd_log_likelihood(&[1.0, 1.9], 1.0, -0.5).is_finite());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for xi in [-0.4, -1e-12, 0.0, 0.3] {
            let p = GpdParams { sigma_hat: 0.7, xi };
            for prob in [0.01, 0.5, 0.99] {
                let t = gpd_quantile(p, prob);
                assert!((gpd_cdf(p, t) - prob).abs() < 1e-12);
            }
        }
    }
}
