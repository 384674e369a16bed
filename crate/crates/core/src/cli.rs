//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::evt::{fit_tail, return_level, EvtError, EvtFit, TailFitConfig};
use crate::mitigation::{mitigate, MitigationConfig, MitigationError, DEFAULT_EPS_ACC};
use crate::report::{density_csv, qq_csv, render_tables, to_json};
use crate::scoring::{train_logreg, ExternalModel, ScoreError, ScoreModel, TrainConfig};
use crate::statcompare::{bootstrap_test, CompareError};
use crate::synthgen::{
    detection_auc, downstream_f1_loss, frechet_distance, kl_similarity, CopulaGenerator,
    GenerationQuality, SynthError,
};
use crate::tabular::{load_csv, split, write_csv, Dataset, GroupSpec, Schema, TabularError};
use crate::tailsampler::{audit, CopulaFactory, SamplerConfig, SamplerError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Evt(#[from] EvtError),
    #[error(transparent)]
    Mitigation(#[from] MitigationError),
    #[error(transparent)]
    Compare(#[from] CompareError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Invalid(_) => "invalid_input",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Csv(_) => "csv",
            CliError::Tabular(_) => "tabular",
            CliError::Score(_) => "scoring",
            CliError::Synth(_) => "synthgen",
            CliError::Sampler(_) => "tailsampler",
            CliError::Evt(_) => "evt",
            CliError::Mitigation(_) => "mitigation",
            CliError::Compare(_) => "statcompare",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evtfair", version, about = "Tail-fairness auditing with extreme value theory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Audit a model's counterfactual discrimination tails for a group pair.
    Audit(AuditArgs),
    /// Generate synthetic rows for one protected group.
    Gen(GenArgs),
    /// Score synthetic data against real data.
    GenEval(GenEvalArgs),
    /// Return levels of a fitted tail.
    Rl(RlArgs),
    /// Search training hyperparameters that reduce tail discrimination.
    Mitigate(MitigateArgs),
    /// Compare a metric across two sets of runs.
    Compare(CompareArgs),
    /// Fit the upper tail of a column of values.
    Fit(FitArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args, Debug)]
struct GroupArgs {
    #[arg(long)]
    attr: String,
    #[arg(long)]
    privileged: String,
    #[arg(long)]
    unprivileged: String,
}

#[derive(Args, Debug)]
struct SamplerArgs {
    #[arg(long, default_value_t = 10)]
    kmin: usize,
    #[arg(long, default_value_t = 50)]
    kmax: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Seconds per group before sampling gives up.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
}

impl SamplerArgs {
    fn config(&self, seed: u64, default_timeout: f64) -> SamplerConfig {
        SamplerConfig {
            k_min: self.kmin,
            k_max: self.kmax,
            m: self.m,
            timeout_secs: self.timeout.unwrap_or(default_timeout),
            seed,
            max_iterations: self.max_iter,
            bootstrap_resamples: self.bootstrap,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    group: GroupArgs,
    /// `builtin:logreg` or `exec:COMMAND ARGS...`.
    #[arg(long, default_value = "builtin:logreg")]
    model: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not print the summary tables.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    group: GroupArgs,
    /// Group value to generate.
    #[arg(long)]
    target: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenEvalArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    synth: PathBuf,
    /// Held-out set for the downstream F1 comparison; defaults to `--real`.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RlArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [500u64, 1000, 2000])]
    m: Vec<u64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MitigateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    group: GroupArgs,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_EPS_ACC)]
    eps_acc: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Column to compare.
    #[arg(long)]
    metric: String,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with a header row.
    #[arg(long)]
    values: PathBuf,
    /// Column to fit; defaults to the first.
    #[arg(long)]
    column: Option<String>,
    #[arg(long, default_value_t = 50)]
    kmax: usize,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Writes via a temporary file in the target directory and a rename.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn load(data: &DataArgs) -> Result<Dataset, CliError> {
    let schema = Schema::from_json_file(&data.schema)?;
    Ok(load_csv(&data.data, &schema)?)
}

fn group_of(ds: &Dataset, g: &GroupArgs) -> Result<GroupSpec, CliError> {
    Ok(GroupSpec::new(ds, &g.attr, &g.privileged, &g.unprivileged)?)
}

const SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

fn build_model(spec: &str, ds: &Dataset, seed: u64) -> Result<Box<dyn ScoreModel>, CliError> {
    if spec == "builtin:logreg" {
        let (train, _, _) = split(ds, SPLIT, seed)?;
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        Ok(Box::new(train_logreg(&train, &cfg)?))
    } else if let Some(cmd) = spec.strip_prefix("exec:") {
        Ok(Box::new(ExternalModel::from_command_line(cmd, ds.schema().clone())?))
    } else {
        Err(CliError::Invalid(format!(
            "unknown model `{spec}`; use builtin:logreg or exec:COMMAND"
        )))
    }
}

/// `report.json` -> `report.<tag>.csv` next to it.
fn sidecar(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.csv"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_audit(a: &AuditArgs) -> Result<(), CliError> {
    let ds = load(&a.data)?;
    let group = group_of(&ds, &a.group)?;
    let model = build_model(&a.model, &ds, a.seed)?;
    let cfg = a.sampler.config(a.seed, 1200.0);
    let factory = CopulaFactory {
        data: &ds,
        group: &group,
    };
    let mut result = audit(&model, &ds, &group, &cfg, &factory)?;
    for (role, g) in [("unprivileged", &result.unprivileged), ("privileged", &result.privileged)] {
        if let crate::tailsampler::FitOutcome::Fitted(t) = &g.outcome {
            let qq = sidecar(&a.out, &format!("qq.{role}"));
            let density = sidecar(&a.out, &format!("density.{role}"));
            write_atomic(&qq, qq_csv(&t.qq.points).as_bytes())?;
            write_atomic(&density, density_csv(&t.exceedances, t.fit.gev).as_bytes())?;
            result.report.diagnostics.qq_files.push(file_name(&qq));
            result.report.diagnostics.density_files.push(file_name(&density));
        }
    }
    write_atomic(&a.out, to_json(&result.report)?.as_bytes())?;
    if !a.quiet {
        print!("{}", render_tables(&result.report));
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    let ds = load(&a.data)?;
    let group = group_of(&ds, &a.group)?;
    if group.counterpart(&a.target).is_none() {
        return Err(TabularError::ValueNotInGroup(a.target.clone()).into());
    }
    let gen = CopulaGenerator::fit(&ds, &group, &a.target)?;
    let rows = gen.sample(a.n, a.seed);
    let mut buf = Vec::new();
    write_csv(&mut buf, &Dataset::new(ds.schema().clone(), rows)?)?;
    write_atomic(&a.out, &buf)
}

fn cmd_gen_eval(a: &GenEvalArgs) -> Result<(), CliError> {
    let schema = Schema::from_json_file(&a.schema)?;
    let real = load_csv(&a.real, &schema)?;
    let synth = load_csv(&a.synth, &schema)?;
    let test = match &a.test {
        Some(p) => load_csv(p, &schema)?,
        None => real.clone(),
    };
    let q = GenerationQuality {
        fid: frechet_distance(&real, &synth)?,
        kl: kl_similarity(&real, &synth)?,
        lgd: detection_auc(&real, &synth, a.seed)?,
        f1_loss: downstream_f1_loss(&real, &synth, &test)?,
    };
    write_atomic(&a.out, to_json(&q)?.as_bytes())
}

fn cmd_rl(a: &RlArgs) -> Result<(), CliError> {
    let fit: EvtFit = serde_json::from_str(&fs::read_to_string(&a.fit)?)?;
    let mut out = String::from("m,return_level\n");
    for &m in &a.m {
        out.push_str(&format!("{m},{}\n", return_level(&fit, m as f64)?));
    }
    match &a.out {
        Some(p) => write_atomic(p, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_mitigate(a: &MitigateArgs) -> Result<(), CliError> {
    let ds = load(&a.data)?;
    let group = group_of(&ds, &a.group)?;
    let (train, valid, test) = split(&ds, SPLIT, a.seed)?;
    let mut audit_cfg = a.sampler.config(a.seed, 120.0);
    audit_cfg.bootstrap_resamples = 0;
    let cfg = MitigationConfig {
        n_trials: a.trials,
        eps_acc: a.eps_acc,
        seed: a.seed,
        audit: audit_cfg,
        ..MitigationConfig::default()
    };
    let result = mitigate(&train, &valid, &test, &group, &cfg)?;
    write_atomic(&a.out, to_json(&result)?.as_bytes())
}

fn read_metric(path: &Path, metric: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == metric)
        .ok_or_else(|| CliError::Invalid(format!("{}: no column `{metric}`", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v = rec.get(idx).unwrap_or("").trim();
        out.push(v.parse::<f64>().map_err(|_| {
            CliError::Invalid(format!("{}: row {}: `{v}` is not a number", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let xa = read_metric(&a.a, &a.metric)?;
    let xb = read_metric(&a.b, &a.metric)?;
    let r = bootstrap_test(&xa, &xb, a.resamples, a.alpha, a.seed)?;
    let (ma, mb) = crate::statcompare::means(&xa, &xb);
    let out = json!({
        "metric": a.metric,
        "n_a": xa.len(),
        "n_b": xb.len(),
        "mean_a": ma,
        "mean_b": mb,
        "cliffs_delta": r.cliffs_delta,
        "magnitude": r.magnitude,
        "bootstrap_ci": [r.bootstrap_ci.0, r.bootstrap_ci.1],
        "significant": r.significant,
    });
    write_atomic(&a.out, to_json(&out)?.as_bytes())
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let column = match &a.column {
        Some(c) => c.clone(),
        None => csv::Reader::from_path(&a.values)?
            .headers()?
            .get(0)
            .map(|s| s.trim().to_owned())
            .ok_or_else(|| CliError::Invalid("values file has no columns".into()))?,
    };
    let values = read_metric(&a.values, &column)?;
    let cfg = TailFitConfig {
        k_max: a.kmax,
        bootstrap_resamples: a.bootstrap,
        seed: a.seed,
    };
    let t = fit_tail(&values, &cfg)?;
    write_atomic(&a.out, to_json(&t.fit)?.as_bytes())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Cmd::Audit(a) => cmd_audit(a),
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::GenEval(a) => cmd_gen_eval(a),
        Cmd::Rl(a) => cmd_rl(a),
        Cmd::Mitigate(a) => cmd_mitigate(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Fit(a) => cmd_fit(a),
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// domain error (reported as one JSON line on stderr), 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let line = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            1
        }
    }
}
