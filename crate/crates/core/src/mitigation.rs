//! Hyperparameter search over the built-in trainer that minimizes tail
//! discrimination subject to an accuracy constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrimination::{group_metrics, DiscriminationError, GroupMetrics};
use crate::parallel::map_indexed;
use crate::scoring::{evaluate, train_logreg, ScoreError, TrainConfig, TrainedModel};
use crate::tabular::{Dataset, GroupSpec};
use crate::tailsampler::{audit, CopulaFactory, SamplerConfig, SamplerError};

pub const DEFAULT_EPS_ACC: f64 = 0.02;

#[derive(Debug, Error)]
pub enum MitigationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Discrimination(#[from] DiscriminationError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Bounds of the random search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub l2: (f64, f64),
    pub epochs: (usize, usize),
    pub class_weight: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: (1e-4, 1.0),
            l2: (1e-6, 10.0),
            epochs: (10, 200),
            class_weight: (0.25, 4.0),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut ChaCha8Rng, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: log_uniform(rng, self.learning_rate),
            l2: log_uniform(rng, self.l2),
            epochs: rng.random_range(self.epochs.0..=self.epochs.1),
            class_weight: log_uniform(rng, self.class_weight),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub accuracy: f64,
    pub aod: f64,
    pub eod: f64,
    pub spd: f64,
    pub di: Option<f64>,
    pub ecd: f64,
    pub acd_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// `|ecd|` on the validation set; `None` when the audit failed.
    pub objective: Option<f64>,
    pub valid_accuracy: f64,
    pub valid_aod: f64,
    pub feasible: bool,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationResult {
    pub best_trial: usize,
    pub best_config: TrainConfig,
    /// Both evaluated on the test set.
    pub baseline: ModelMetrics,
    pub best: ModelMetrics,
    /// Baseline minus best accuracy on the test set.
    pub accuracy_loss: f64,
    /// Baseline minus best accuracy on the validation set.
    pub valid_accuracy_loss: f64,
    pub eps_acc: f64,
    pub no_feasible_candidate: bool,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone)]
pub struct MitigationConfig {
    pub n_trials: usize,
    pub eps_acc: f64,
    pub seed: u64,
    pub space: SearchSpace,
    /// Audit settings for every candidate and the final report.
    pub audit: SamplerConfig,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            n_trials: 50,
            eps_acc: DEFAULT_EPS_ACC,
            seed: 0,
            space: SearchSpace::default(),
            audit: SamplerConfig {
                timeout_secs: 120.0,
                bootstrap_resamples: 0,
                ..SamplerConfig::default()
            },
        }
    }
}

/// The configs tried: the default config first, then random draws, each
/// derived from the root seed and its index alone.
pub fn candidate_configs(cfg: &MitigationConfig) -> Vec<TrainConfig> {
    (0..cfg.n_trials)
        .map(|i| {
            if i == 0 {
                return TrainConfig {
                    seed: cfg.seed,
                    ..TrainConfig::default()
                };
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            cfg.space.sample(&mut rng, cfg.seed)
        })
        .collect()
}

fn ecd_of(
    model: &TrainedModel,
    ds: &Dataset,
    generator_data: &Dataset,
    group: &GroupSpec,
    audit_cfg: &SamplerConfig,
) -> Result<(f64, f64), SamplerError> {
    let factory = CopulaFactory {
        data: generator_data,
        group,
    };
    let a = audit(model, ds, group, audit_cfg, &factory)?;
    Ok((a.report.ecd, a.report.acd_diff))
}

fn metrics(
    model: &TrainedModel,
    ds: &Dataset,
    generator_data: &Dataset,
    group: &GroupSpec,
    audit_cfg: &SamplerConfig,
) -> Result<ModelMetrics, MitigationError> {
    let acc = evaluate(model, ds)?.accuracy;
    let GroupMetrics { aod, eod, spd, di } = group_metrics(model, ds, group)?;
    let (ecd, acd_diff) = ecd_of(model, ds, generator_data, group, audit_cfg)?;
    Ok(ModelMetrics {
        accuracy: acc,
        aod,
        eod,
        spd,
        di,
        ecd,
        acd_diff,
    })
}

/// Random search minimizing `|ecd|` on `valid` among candidates whose
/// validation accuracy is within `eps_acc` of the default config's. Ties go
/// to lower AOD, then to the earlier trial. Synthetic rows for the audits
/// are drawn from generators fitted on `train`.
pub fn mitigate(
    train: &Dataset,
    valid: &Dataset,
    test: &Dataset,
    group: &GroupSpec,
    cfg: &MitigationConfig,
) -> Result<MitigationResult, MitigationError> {
    if cfg.n_trials == 0 {
        return Err(MitigationError::InvalidArgument("need at least one trial".into()));
    }
    if !(cfg.eps_acc >= 0.0) {
        return Err(MitigationError::InvalidArgument("eps_acc must be >= 0".into()));
    }
    cfg.audit.validate()?;
    let configs = candidate_configs(cfg);

    let evaluated = map_indexed(configs.len(), |i| -> Result<(TrainedModel, Trial), MitigationError> {
        let c = configs[i];
        let model = train_logreg(train, &c)?;
        let valid_accuracy = evaluate(&model, valid)?.accuracy;
        let valid_aod = group_metrics(&model, valid, group)?.aod;
        let (objective, error) = match ecd_of(&model, valid, train, group, &cfg.audit) {
            Ok((ecd, _)) => (Some(ecd.abs()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok((
            model,
            Trial {
                index: i,
                config: c,
                objective,
                valid_accuracy,
                valid_aod,
                feasible: false,
                error,
            },
        ))
    });
    let mut models = Vec::with_capacity(evaluated.len());
    let mut trials = Vec::with_capacity(evaluated.len());
    for r in evaluated {
        let (m, t) = r?;
        models.push(m);
        trials.push(t);
    }
    let floor = trials[0].valid_accuracy - cfg.eps_acc;
    for t in &mut trials {
        t.feasible = t.valid_accuracy >= floor;
    }

    let key = |t: &Trial| (t.objective.unwrap_or(f64::INFINITY), t.valid_aod, t.index);
    let best = trials
        .iter()
        .filter(|t| t.feasible)
        .min_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.cmp(&kb.2))
        })
        .map(|t| t.index);
    let no_feasible_candidate = best.is_none();
    let best = best.unwrap_or(0);

    let baseline_m = metrics(&models[0], test, train, group, &cfg.audit)?;
    let best_m = if best == 0 {
        baseline_m
    } else {
        metrics(&models[best], test, train, group, &cfg.audit)?
    };
    Ok(MitigationResult {
        best_trial: best,
        best_config: trials[best].config,
        accuracy_loss: baseline_m.accuracy - best_m.accuracy,
        valid_accuracy_loss: trials[0].valid_accuracy - trials[best].valid_accuracy,
        baseline: baseline_m,
        best: best_m,
        eps_acc: cfg.eps_acc,
        no_feasible_candidate,
        trials,
    })
}
