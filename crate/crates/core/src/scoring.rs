//! Favorable-outcome scorers: a built-in logistic regression, a constant
//! fallback, and an adapter that shells out to an external model.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{write_columns, ColumnKind, Dataset, Record, Schema, TabularError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("record does not conform to the model schema: {0}")]
    SchemaMismatch(String),
    #[error("external model failed: {0}")]
    ExternalModelFailure(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// Anything that maps records to a probability of the favorable outcome.
pub trait ScoreModel: Send + Sync {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError>;

    /// Short identifier recorded in reports.
    fn id(&self) -> String;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        (**self).score(rows)
    }
    fn id(&self) -> String {
        (**self).id()
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for Box<M> {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        (**self).score(rows)
    }
    fn id(&self) -> String {
        (**self).id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Multiplier on the loss of favorable-class examples.
    pub class_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 200,
            class_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.l2 >= 0.0
            && self.l2.is_finite()
            && self.epochs > 0
            && self.class_weight > 0.0
            && self.class_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ScoreError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureSpec {
    /// Standardized by training mean / stddev; a zero stddev encodes as 0.
    Numeric { column: usize, mean: f64, std: f64 },
    /// One-hot over the training categories; unseen values encode as all zeros.
    OneHot { column: usize, categories: Vec<String> },
}

/// One-hot + standardization encoder fitted on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    width: usize,
    features: Vec<FeatureSpec>,
}

impl FeatureEncoder {
    pub fn fit(ds: &Dataset, include_label: bool) -> Self {
        let schema = ds.schema();
        let label = schema.label_index();
        let n = ds.len().max(1) as f64;
        let mut features = Vec::new();
        for (i, col) in schema.columns().iter().enumerate() {
            if i == label && !include_label {
                continue;
            }
            match col.kind {
                ColumnKind::Numeric => {
                    let mean = ds.rows().iter().filter_map(|r| r[i].as_num()).sum::<f64>() / n;
                    let var = ds
                        .rows()
                        .iter()
                        .filter_map(|r| r[i].as_num())
                        .map(|x| (x - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    features.push(FeatureSpec::Numeric {
                        column: i,
                        mean,
                        std: var.sqrt(),
                    });
                }
                ColumnKind::Categorical => features.push(FeatureSpec::OneHot {
                    column: i,
                    categories: ds.categories(i),
                }),
            }
        }
        FeatureEncoder {
            width: schema.width(),
            features,
        }
    }

    pub fn dim(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                FeatureSpec::Numeric { .. } => 1,
                FeatureSpec::OneHot { categories, .. } => categories.len(),
            })
            .sum()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn encode(&self, row: &Record) -> Result<Vec<f64>, ScoreError> {
        if row.len() != self.width {
            return Err(ScoreError::SchemaMismatch(format!(
                "expected {} values, got {}",
                self.width,
                row.len()
            )));
        }
        let mut out = Vec::with_capacity(self.dim());
        for f in &self.features {
            match f {
                FeatureSpec::Numeric { column, mean, std } => {
                    let x = row[*column].as_num().ok_or_else(|| {
                        ScoreError::SchemaMismatch(format!("column {column} must be numeric"))
                    })?;
                    out.push(if *std > 0.0 { (x - mean) / std } else { 0.0 });
                }
                FeatureSpec::OneHot { column, categories } => {
                    let v = row[*column].as_cat().ok_or_else(|| {
                        ScoreError::SchemaMismatch(format!("column {column} must be categorical"))
                    })?;
                    let start = out.len();
                    out.resize(start + categories.len(), 0.0);
                    if let Ok(pos) = categories.binary_search_by(|c| c.as_str().cmp(v)) {
                        out[start + pos] = 1.0;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn encode_all(&self, rows: &[Record]) -> Result<Vec<Vec<f64>>, ScoreError> {
        rows.iter().map(|r| self.encode(r)).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on the class-weighted, L2-regularized mean
/// log-loss, starting from zero weights. Returns `(weights, bias, losses)`
/// where `losses[e]` is the objective after `e` updates.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    cfg: &TrainConfig,
) -> (Vec<f64>, f64, Vec<f64>) {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let inv_n = 1.0 / n.max(1) as f64;
    let mut grad = vec![0.0; d];
    for epoch in 0..=cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = sigmoid(z);
            let c = if yi { cfg.class_weight } else { 1.0 };
            // log(1 + e^{-|z|}) keeps the loss finite for large margins
            let softplus = (-z.abs()).exp().ln_1p();
            loss += c * if yi {
                softplus + (-z).max(0.0)
            } else {
                softplus + z.max(0.0)
            };
            let r = c * (p - if yi { 1.0 } else { 0.0 });
            gb += r;
            for (g, a) in grad.iter_mut().zip(xi) {
                *g += r * a;
            }
        }
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * cfg.l2 * 0.5;
        losses.push(loss * inv_n + reg);
        if epoch == cfg.epochs {
            break;
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= cfg.learning_rate * (gj * inv_n + cfg.l2 * *wj);
        }
        b -= cfg.learning_rate * gb * inv_n;
    }
    (w, b, losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub encoder: FeatureEncoder,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogRegModel {
    pub fn probability(&self, row: &Record) -> Result<f64, ScoreError> {
        let x = self.encoder.encode(row)?;
        let z = self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        Ok(sigmoid(z))
    }
}

impl ScoreModel for LogRegModel {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        rows.iter().map(|r| self.probability(r)).collect()
    }

    fn id(&self) -> String {
        "builtin:logreg".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub probability: f64,
}

impl ScoreModel for ConstantModel {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        Ok(vec![self.probability; rows.len()])
    }

    fn id(&self) -> String {
        format!("constant:{}", self.probability)
    }
}

/// Output of [`train_logreg`]. A single-class training set yields the
/// constant model predicting that class's empirical rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Logistic(LogRegModel),
    Constant(ConstantModel),
}

impl TrainedModel {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, TrainedModel::Constant(_))
    }
}

impl ScoreModel for TrainedModel {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        match self {
            TrainedModel::Logistic(m) => m.score(rows),
            TrainedModel::Constant(m) => m.score(rows),
        }
    }

    fn id(&self) -> String {
        match self {
            TrainedModel::Logistic(m) => m.id(),
            TrainedModel::Constant(m) => m.id(),
        }
    }
}

pub fn train_logreg(train: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel, ScoreError> {
    train_logreg_traced(train, cfg).map(|(m, _)| m)
}

/// As [`train_logreg`], also returning the per-epoch objective.
pub fn train_logreg_traced(
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<f64>), ScoreError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ScoreError::EmptyTrainingSet);
    }
    let y = train.labels();
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        let p = positives as f64 / y.len() as f64;
        return Ok((
            TrainedModel::Constant(ConstantModel { probability: p }),
            Vec::new(),
        ));
    }
    let encoder = FeatureEncoder::fit(train, false);
    let x = encoder.encode_all(train.rows())?;
    let (weights, bias, losses) = fit_logistic(&x, &y, cfg);
    Ok((
        TrainedModel::Logistic(LogRegModel {
            encoder,
            weights,
            bias,
        }),
        losses,
    ))
}

/// A model run as a child process: it reads a headered CSV (schema columns
/// minus the label) on stdin and writes one probability per line on stdout.
#[derive(Debug)]
pub struct ExternalModel {
    command: Vec<String>,
    schema: Schema,
    lock: Mutex<()>,
}

impl ExternalModel {
    pub fn new(command: Vec<String>, schema: Schema) -> Result<Self, ScoreError> {
        if command.is_empty() || command[0].is_empty() {
            return Err(ScoreError::ExternalModelFailure("empty command".into()));
        }
        Ok(ExternalModel {
            command,
            schema,
            lock: Mutex::new(()),
        })
    }

    /// Splits a command line on whitespace.
    pub fn from_command_line(line: &str, schema: Schema) -> Result<Self, ScoreError> {
        Self::new(line.split_whitespace().map(str::to_owned).collect(), schema)
    }

    fn run_batch(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        let fail = |m: String| ScoreError::ExternalModelFailure(m);
        for r in rows {
            if r.len() != self.schema.width() {
                return Err(ScoreError::SchemaMismatch(format!(
                    "expected {} values, got {}",
                    self.schema.width(),
                    r.len()
                )));
            }
        }
        let mut input = Vec::new();
        write_columns(&mut input, &self.schema, rows, Some(self.schema.label_index()))?;

        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(format!("spawn `{}`: {e}", self.command[0])))?;
        let mut stdin = child.stdin.take().expect("piped");
        // Feed stdin from a separate thread so a child that streams output
        // before consuming all input cannot deadlock us.
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let mut text = String::new();
        let read = child.stdout.take().expect("piped").read_to_string(&mut text);
        let status = child.wait().map_err(|e| fail(format!("wait: {e}")))?;
        // A broken pipe here only matters if the child also misbehaved below.
        let _ = writer.join();
        read.map_err(|e| fail(format!("read: {e}")))?;
        if !status.success() {
            return Err(fail(format!("exit status {status}")));
        }
        let mut out = Vec::with_capacity(rows.len());
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let p: f64 = t
                .parse()
                .map_err(|_| fail(format!("line {}: `{t}` is not a number", i + 1)))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(fail(format!("line {}: {p} is outside [0, 1]", i + 1)));
            }
            out.push(p);
        }
        if out.len() != rows.len() {
            return Err(fail(format!(
                "expected {} probabilities, got {}",
                rows.len(),
                out.len()
            )));
        }
        Ok(out)
    }
}

impl ScoreModel for ExternalModel {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        self.run_batch(rows)
    }

    fn id(&self) -> String {
        format!("exec:{}", self.command.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub f1: f64,
}

/// Predicted favorable iff score >= 0.5.
pub fn predict(scores: &[f64]) -> Vec<bool> {
    scores.iter().map(|&s| s >= 0.5).collect()
}

pub fn evaluate<M: ScoreModel + ?Sized>(model: &M, test: &Dataset) -> Result<Evaluation, ScoreError> {
    if test.is_empty() {
        return Err(ScoreError::Tabular(TabularError::EmptyDataset));
    }
    let pred = predict(&model.score(test.rows())?);
    let truth = test.labels();
    Ok(classification_metrics(&pred, &truth))
}

pub fn classification_metrics(pred: &[bool], truth: &[bool]) -> Evaluation {
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        if p == t {
            correct += 1;
        }
    }
    let denom = 2 * tp + fp + fneg;
    Evaluation {
        accuracy: correct as f64 / pred.len().max(1) as f64,
        f1: if tp == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 },
    }
}
