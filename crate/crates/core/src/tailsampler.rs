//! Collects counterfactual-discrimination samples until their upper tail
//! passes the exponentiality test, then fits and compares the group tails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::discrimination::{acd, compute_cd_marked, cvar, CdSample, DiscriminationError, DEFAULT_CVAR_ALPHA};
use crate::evt::{
    cv_test_top, fit_tail, return_level, CvOutcome, CvTest, EvtError, EvtFit, TailFit,
    TailFitConfig,
};
use crate::scoring::ScoreModel;
use crate::synthgen::{CopulaGenerator, Generator, SynthError};
use crate::tabular::{write_csv, Dataset, GroupSpec, TabularError};

/// |ECD| above this flags discrimination.
pub const ECD_THRESHOLD: f64 = 0.05;
pub const RETURN_PERIODS: [u64; 3] = [500, 1000, 2000];

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("group value `{0}` has no rows")]
    MissingGroup(String),
    #[error(transparent)]
    Discrimination(#[from] DiscriminationError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Evt(#[from] EvtError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Synthetic rows added per round.
    pub m: usize,
    pub timeout_secs: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// 0 skips bootstrap standard errors.
    pub bootstrap_resamples: usize,
    pub cvar_alpha: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            k_min: 10,
            k_max: 50,
            m: 1,
            timeout_secs: 1200.0,
            seed: 0,
            max_iterations: 100_000,
            bootstrap_resamples: 200,
            cvar_alpha: DEFAULT_CVAR_ALPHA,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: &str| Err(SamplerError::InvalidConfig(msg.to_owned()));
        if self.k_min < 2 || self.k_min >= self.k_max {
            return bad("need 2 <= k_min < k_max");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return bad("timeout must be positive");
        }
        if !(self.cvar_alpha > 0.0 && self.cvar_alpha < 1.0) {
            return bad("cvar alpha must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    Timeout,
    IterationCap,
    /// The test passed but the tail could not be fitted.
    Fit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitOutcome {
    Fitted(Box<TailFit>),
    /// No positive tail: the model never disadvantages this group.
    Degenerate,
    Failed(FailReason),
}

impl FitOutcome {
    pub fn fit(&self) -> Option<&EvtFit> {
        match self {
            FitOutcome::Fitted(t) => Some(&t.fit),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            FitOutcome::Fitted(_) => "fitted",
            FitOutcome::Degenerate => "degenerate",
            FitOutcome::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTailReport {
    pub value: String,
    pub n_real: usize,
    pub n_synthetic: usize,
    pub iterations: usize,
    pub cds: Vec<CdSample>,
    pub acd: f64,
    pub cvar: f64,
    /// Outcome of the last exponentiality test.
    pub cv: CvTest,
    pub passed_cv: bool,
    pub outcome: FitOutcome,
}

/// Builds a generator for a group value on first use.
pub trait GeneratorFactory: Sync {
    fn build(&self, target: &str) -> Result<Box<dyn Generator>, SynthError>;
}

/// Copula generators fitted on a fixed dataset.
pub struct CopulaFactory<'a> {
    pub data: &'a Dataset,
    pub group: &'a GroupSpec,
}

impl GeneratorFactory for CopulaFactory<'_> {
    fn build(&self, target: &str) -> Result<Box<dyn Generator>, SynthError> {
        Ok(Box::new(CopulaGenerator::fit(self.data, self.group, target)?))
    }
}

fn insert_top(top: &mut Vec<f64>, v: f64, cap: usize) {
    let pos = top.partition_point(|&x| x >= v);
    if pos < cap {
        top.insert(pos, v);
        top.truncate(cap);
    }
}

/// Scores the group's rows and their counterfactuals, then keeps appending
/// `m` synthetic rows at a time until the top-k exponentiality test passes,
/// the tail turns out degenerate, the timeout elapses or the iteration cap
/// is reached. Only new rows are scored each round.
pub fn generate_tail_samples<M: ScoreModel + ?Sized>(
    model: &M,
    dataset: &Dataset,
    group: &GroupSpec,
    target: &str,
    generators: &dyn GeneratorFactory,
    cfg: &SamplerConfig,
) -> Result<GroupTailReport, SamplerError> {
    cfg.validate()?;
    if group.counterpart(target).is_none() {
        return Err(TabularError::ValueNotInGroup(target.to_owned()).into());
    }
    let start = Instant::now();
    let timeout = Duration::from_secs_f64(cfg.timeout_secs);
    let real: Vec<_> = dataset
        .rows()
        .iter()
        .filter(|r| group.value_of(r) == Some(target))
        .cloned()
        .collect();
    if real.is_empty() {
        return Err(SamplerError::MissingGroup(target.to_owned()));
    }
    let n_real = real.len();
    let mut cds = compute_cd_marked(model, real, group, false)?;
    let mut top = Vec::with_capacity(cfg.k_max + 1);
    for s in &cds {
        insert_top(&mut top, s.cd, cfg.k_max);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(if target == group.privileged { 1 } else { 0 });
    let mut generator: Option<Box<dyn Generator>> = None;
    let mut iterations = 0;
    let (cv, failure) = loop {
        iterations += 1;
        let cv = cv_test_top(&top, cds.len(), cfg.k_min, cfg.k_max)?;
        match cv.outcome {
            CvOutcome::Passed | CvOutcome::Degenerate => break (cv, None),
            CvOutcome::TooFewSamples | CvOutcome::Violated { .. } => {}
        }
        if start.elapsed() >= timeout {
            break (cv, Some(FailReason::Timeout));
        }
        if iterations >= cfg.max_iterations {
            break (cv, Some(FailReason::IterationCap));
        }
        if generator.is_none() {
            generator = Some(generators.build(target)?);
        }
        let rows = generator.as_ref().expect("built above").generate(cfg.m, &mut rng);
        let fresh = compute_cd_marked(model, rows, group, true)?;
        for s in &fresh {
            insert_top(&mut top, s.cd, cfg.k_max);
        }
        cds.extend(fresh);
    };

    let values: Vec<f64> = cds.iter().map(|s| s.cd).collect();
    let passed_cv = cv.passed();
    let outcome = match (cv.outcome, failure) {
        (_, Some(reason)) => FitOutcome::Failed(reason),
        (CvOutcome::Degenerate, None) => FitOutcome::Degenerate,
        _ => {
            let tf_cfg = TailFitConfig {
                k_max: cfg.k_max,
                bootstrap_resamples: cfg.bootstrap_resamples,
                seed: cfg.seed,
            };
            match fit_tail(&values, &tf_cfg) {
                Ok(t) => FitOutcome::Fitted(Box::new(t)),
                Err(e) => FitOutcome::Failed(FailReason::Fit(e.to_string())),
            }
        }
    };
    Ok(GroupTailReport {
        value: target.to_owned(),
        n_real,
        n_synthetic: cds.len() - n_real,
        iterations,
        acd: acd(&cds)?,
        cvar: cvar(&values, cfg.cvar_alpha)?,
        cv,
        passed_cv,
        outcome,
        cds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ecd {
    pub ecd: f64,
    pub discriminates: bool,
    /// A side had no fitted tail and entered as location 0.
    pub degenerate_side: bool,
}

/// `mu_u - mu_p` of the fitted GEV locations.
pub fn compute_ecd(fit_u: &EvtFit, fit_p: &EvtFit) -> Ecd {
    ecd_of(fit_u.gev.mu, fit_p.gev.mu, false)
}

fn ecd_of(mu_u: f64, mu_p: f64, degenerate_side: bool) -> Ecd {
    let ecd = mu_u - mu_p;
    Ecd {
        ecd,
        discriminates: ecd.abs() > ECD_THRESHOLD,
        degenerate_side,
    }
}

/// As [`compute_ecd`], with a side lacking a fit contributing location 0.
pub fn ecd_from_outcomes(u: &FitOutcome, p: &FitOutcome) -> Ecd {
    match (u.fit(), p.fit()) {
        (Some(a), Some(b)) => compute_ecd(a, b),
        (a, b) => ecd_of(
            a.map_or(0.0, |f| f.gev.mu),
            b.map_or(0.0, |f| f.gev.mu),
            true,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub value: String,
    pub n_real: usize,
    pub n_synthetic: usize,
    pub iterations: usize,
    pub acd: f64,
    pub cvar: f64,
    pub passed_cv: bool,
    /// `fitted`, `degenerate` or `failed`.
    pub status: String,
    #[serde(default)]
    pub failure: Option<FailReason>,
    #[serde(default)]
    pub fit: Option<EvtFit>,
    /// Keyed by number of interactions.
    #[serde(default)]
    pub return_levels: BTreeMap<u64, f64>,
}

impl GroupSummary {
    pub fn from_report(r: &GroupTailReport) -> Self {
        let fit = r.outcome.fit().cloned();
        let return_levels = fit
            .as_ref()
            .map(|f| {
                RETURN_PERIODS
                    .iter()
                    .filter_map(|&m| return_level(f, m as f64).ok().map(|v| (m, v)))
                    .collect()
            })
            .unwrap_or_default();
        GroupSummary {
            value: r.value.clone(),
            n_real: r.n_real,
            n_synthetic: r.n_synthetic,
            iterations: r.iterations,
            acd: r.acd,
            cvar: r.cvar,
            passed_cv: r.passed_cv,
            status: r.outcome.status().to_owned(),
            failure: match &r.outcome {
                FitOutcome::Failed(f) => Some(f.clone()),
                _ => None,
            },
            fit,
            return_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub attribute: String,
    pub privileged: String,
    pub unprivileged: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    /// SHA-256 of the audited rows written as CSV.
    pub dataset_hash: String,
    pub model_id: String,
    pub group: GroupDescriptor,
    pub config: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelRow {
    pub m: u64,
    pub unprivileged: Option<f64>,
    pub privileged: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default)]
    pub qq_files: Vec<String>,
    #[serde(default)]
    pub density_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: Metadata,
    pub unprivileged: GroupSummary,
    pub privileged: GroupSummary,
    /// `ACD_u - ACD_p`.
    pub acd_diff: f64,
    /// `CVaR_u - CVaR_p`.
    pub cvar_diff: f64,
    pub ecd: f64,
    pub discriminates: bool,
    pub ecd_degenerate_side: bool,
    pub return_levels: Vec<ReturnLevelRow>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

/// Full audit output: the serializable report plus per-group samples and
/// fits for plotting.
#[derive(Debug, Clone)]
pub struct Audit {
    pub report: AuditReport,
    pub unprivileged: GroupTailReport,
    pub privileged: GroupTailReport,
}

pub fn dataset_hash(ds: &Dataset) -> Result<String, TabularError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, ds)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// Samples and fits both group tails and compares them. Rows outside the
/// group pair are ignored.
pub fn audit<M: ScoreModel + ?Sized>(
    model: &M,
    dataset: &Dataset,
    group: &GroupSpec,
    cfg: &SamplerConfig,
    generators: &dyn GeneratorFactory,
) -> Result<Audit, SamplerError> {
    cfg.validate()?;
    let u = generate_tail_samples(model, dataset, group, &group.unprivileged, generators, cfg)?;
    let p = generate_tail_samples(model, dataset, group, &group.privileged, generators, cfg)?;
    let ecd = ecd_from_outcomes(&u.outcome, &p.outcome);
    let (su, sp) = (GroupSummary::from_report(&u), GroupSummary::from_report(&p));
    let return_levels = RETURN_PERIODS
        .iter()
        .map(|m| ReturnLevelRow {
            m: *m,
            unprivileged: su.return_levels.get(m).copied(),
            privileged: sp.return_levels.get(m).copied(),
        })
        .collect();
    let report = AuditReport {
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            dataset_hash: dataset_hash(dataset)?,
            model_id: model.id(),
            group: GroupDescriptor {
                attribute: group.attribute.clone(),
                privileged: group.privileged.clone(),
                unprivileged: group.unprivileged.clone(),
            },
            config: *cfg,
        },
        acd_diff: u.acd - p.acd,
        cvar_diff: u.cvar - p.cvar,
        ecd: ecd.ecd,
        discriminates: ecd.discriminates,
        ecd_degenerate_side: ecd.degenerate_side,
        unprivileged: su,
        privileged: sp,
        return_levels,
        diagnostics: Diagnostics::default(),
    };
    Ok(Audit {
        report,
        unprivileged: u,
        privileged: p,
    })
}
