//! Tail classification, Q-Q diagnostics, extrapolation horizon and return levels.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::gev::{gev_quantile, GevParams};
use super::{EvtError, EvtFit, XI_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TailType {
    /// Gumbel: exponential decay.
    TypeI,
    /// Fréchet: polynomial decay.
    TypeII,
    /// Weibull: finite upper endpoint.
    TypeIII,
}

impl fmt::Display for TailType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailType::TypeI => "I",
            TailType::TypeII => "II",
            TailType::TypeIII => "III",
        })
    }
}

/// Sign of the shape with a two-standard-error margin; anything straddling
/// zero counts as Gumbel.
pub fn classify_tail(xi: f64, se_xi: f64) -> TailType {
    if xi + 2.0 * se_xi < 0.0 {
        TailType::TypeIII
    } else if xi - 2.0 * se_xi > 0.0 {
        TailType::TypeII
    } else {
        TailType::TypeI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QqClass {
    Linear,
    SkewedLeft,
    SkewedRight,
    HeavyTail,
}

impl fmt::Display for QqClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QqClass::Linear => "Linear",
            QqClass::SkewedLeft => "Skewed-Left",
            QqClass::SkewedRight => "Skewed-Right",
            QqClass::HeavyTail => "Heavy-Tail",
        })
    }
}

pub const QQ_LINEAR_R2: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqDiagnostic {
    /// `(empirical, theoretical)` pairs in ascending order.
    pub points: Vec<(f64, f64)>,
    pub class: QqClass,
    pub r2: f64,
}

/// Compares sorted exceedances with fitted GEV quantiles at plotting
/// positions `(i - 0.5) / k`.
pub fn qq_diagnostic(gev: GevParams, tail_type: TailType, exceedances: &[f64]) -> QqDiagnostic {
    let mut emp = exceedances.to_vec();
    emp.sort_by(f64::total_cmp);
    let k = emp.len();
    let theo: Vec<f64> = (1..=k)
        .map(|i| gev_quantile(gev, (i as f64 - 0.5) / k as f64))
        .collect();
    let points: Vec<(f64, f64)> = emp.iter().copied().zip(theo.iter().copied()).collect();

    // least squares: empirical = a + b * theoretical
    let kf = k as f64;
    let mx = theo.iter().sum::<f64>() / kf;
    let my = emp.iter().sum::<f64>() / kf;
    let sxx: f64 = theo.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = emp.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = theo.iter().zip(&emp).map(|(x, y)| (x - mx) * (y - my)).sum();
    let (r2, slope) = if sxx > 0.0 && syy > 0.0 {
        (sxy * sxy / (sxx * syy), sxy / sxx)
    } else {
        (0.0, 0.0)
    };
    let intercept = my - slope * mx;

    let class = if tail_type == TailType::TypeII {
        QqClass::HeavyTail
    } else if r2 >= QQ_LINEAR_R2 {
        QqClass::Linear
    } else {
        let start = (3 * k) / 4;
        let upper = &points[start.min(k.saturating_sub(1))..];
        let mean_resid = upper
            .iter()
            .map(|(y, x)| y - (intercept + slope * x))
            .sum::<f64>()
            / upper.len().max(1) as f64;
        if mean_resid < 0.0 {
            QqClass::SkewedLeft
        } else {
            QqClass::SkewedRight
        }
    };
    QqDiagnostic { points, class, r2 }
}

/// Number of future interactions over which extrapolating the tail is
/// considered sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Infinite,
    Zero,
    Finite(u64),
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Infinite => f.write_str("inf"),
            Horizon::Zero => f.write_str("0"),
            Horizon::Finite(b) => write!(f, "{b}"),
        }
    }
}

// JSON form: a count, `0` for Zero, or the string "infinite".
impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Horizon::Infinite => s.serialize_str("infinite"),
            Horizon::Zero => s.serialize_u64(0),
            Horizon::Finite(b) => s.serialize_u64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(0) => Ok(Horizon::Zero),
            Repr::Count(b) => Ok(Horizon::Finite(b)),
            Repr::Text(t) if t == "infinite" || t == "inf" => Ok(Horizon::Infinite),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad horizon `{t}`"))),
        }
    }
}

const HORIZON_GRID: [u64; 5] = [500, 1000, 2000, 5000, 10000];

pub fn horizon(tail_type: TailType, qq: QqClass, zeta_u: f64) -> Horizon {
    match (tail_type, qq) {
        (TailType::TypeII, _) | (_, QqClass::HeavyTail) => Horizon::Zero,
        (TailType::TypeIII, QqClass::Linear) => Horizon::Infinite,
        _ => {
            let target = 10.0 / zeta_u;
            // nearest grid point, ties resolved downwards; the grid bounds clamp
            let b = HORIZON_GRID
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = (a as f64 - target).abs();
                    let db = (b as f64 - target).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("non-empty grid");
            Horizon::Finite(b)
        }
    }
}

/// The tail parameters needed to extrapolate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceModel {
    pub u: f64,
    pub zeta_u: f64,
    pub sigma_hat: f64,
    pub xi: f64,
}

impl From<&EvtFit> for ExceedanceModel {
    fn from(f: &EvtFit) -> Self {
        ExceedanceModel {
            u: f.u,
            zeta_u: f.zeta_u,
            sigma_hat: f.gpd.sigma_hat,
            xi: f.gpd.xi,
        }
    }
}

/// Level exceeded on average once in `m` interactions:
/// `u + (sigma_hat / xi) [(m zeta_u)^xi - 1]`, or `u + sigma_hat ln(m zeta_u)`
/// in the exponential limit.
pub fn return_level(fit: &EvtFit, m: f64) -> Result<f64, EvtError> {
    return_level_of(&ExceedanceModel::from(fit), m)
}

pub fn return_level_of(model: &ExceedanceModel, m: f64) -> Result<f64, EvtError> {
    let ExceedanceModel {
        u,
        zeta_u,
        sigma_hat,
        xi,
    } = *model;
    let valid = u.is_finite()
        && sigma_hat > 0.0
        && sigma_hat.is_finite()
        && xi.is_finite()
        && zeta_u > 0.0
        && zeta_u <= 1.0;
    if !valid {
        return Err(EvtError::InvalidFit(format!("{model:?}")));
    }
    if !(m >= 1.0) || !m.is_finite() {
        return Err(EvtError::InvalidArgument(format!("m must be >= 1, got {m}")));
    }
    let y = (m * zeta_u).ln();
    Ok(if xi.abs() < XI_ZERO {
        u + sigma_hat * y
    } else {
        u + sigma_hat / xi * (xi * y).exp_m1()
    })
}
