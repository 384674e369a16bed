//! Per-group synthetic rows from a Gaussian copula, and metrics comparing
//! synthetic with real data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::scoring::{
    evaluate, fit_logistic, train_logreg, FeatureEncoder, ScoreError, TrainConfig,
};
use crate::tabular::{ColumnKind, Dataset, GroupSpec, Record, Value};

pub const MIN_GROUP_ROWS: usize = 5;
const KL_BINS: usize = 20;
const DETECTION_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("group `{value}` has {got} rows, need at least {needed}")]
    GroupTooSmall {
        value: String,
        needed: usize,
        got: usize,
    },
    #[error("datasets do not share a schema")]
    SchemaMismatch,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Something that produces rows for one protected group.
pub trait Generator: Send + Sync {
    fn generate(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Record>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    /// Sorted training values.
    Numeric(Vec<f64>),
    /// Sorted categories with their frequencies.
    Categorical {
        categories: Vec<String>,
        probs: Vec<f64>,
    },
}

impl Marginal {
    fn inverse(&self, u: f64) -> Value {
        match self {
            Marginal::Numeric(sorted) => {
                let pos = u * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(sorted.len() - 1);
                let frac = pos - lo as f64;
                Value::Num(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
            }
            Marginal::Categorical { categories, probs } => {
                let mut acc = 0.0;
                for (c, p) in categories.iter().zip(probs) {
                    acc += p;
                    if u <= acc {
                        return Value::Cat(c.clone());
                    }
                }
                Value::Cat(categories.last().expect("non-empty").clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaGenerator {
    pub group: GroupSpec,
    pub target: String,
    pub marginals: Vec<Marginal>,
    /// Row-major correlation of the latent normal scores.
    pub correlation: Vec<Vec<f64>>,
    /// `factor * factor^T == correlation`.
    factor: Vec<Vec<f64>>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Average ranks (1-based) of `keys`.
fn average_ranks(keys: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && keys[idx[j]] == keys[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Nearest correlation matrix in the eigenvalue-clipping sense, and a factor
/// of it.
fn project_psd(c: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = c.nrows();
    let eig = SymmetricEigen::new(c);
    let lambda = eig.eigenvalues.map(|l| l.max(0.0));
    let v = eig.eigenvectors;
    let mut p = &v * DMatrix::from_diagonal(&lambda) * v.transpose();
    let scale: Vec<f64> = (0..d).map(|i| p[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            p[(i, j)] /= scale[i] * scale[j];
        }
        p[(i, i)] = 1.0;
    }
    let mut factor = v * DMatrix::from_diagonal(&lambda.map(f64::sqrt));
    for i in 0..d {
        for j in 0..d {
            factor[(i, j)] /= scale[i];
        }
    }
    (p, factor)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl CopulaGenerator {
    /// Fits marginals and the latent correlation on the rows of `train`
    /// whose protected value is `target`.
    pub fn fit(train: &Dataset, group: &GroupSpec, target: &str) -> Result<Self, SynthError> {
        let rows: Vec<&Record> = train
            .rows()
            .iter()
            .filter(|r| group.value_of(r) == Some(target))
            .collect();
        if rows.len() < MIN_GROUP_ROWS {
            return Err(SynthError::GroupTooSmall {
                value: target.to_owned(),
                needed: MIN_GROUP_ROWS,
                got: rows.len(),
            });
        }
        let n = rows.len();
        let normal = std_normal();
        let schema = train.schema();
        let d = schema.width();
        let mut marginals = Vec::with_capacity(d);
        let mut scores: Vec<Option<Vec<f64>>> = Vec::with_capacity(d);
        for (j, col) in schema.columns().iter().enumerate() {
            let keys: Vec<f64> = match col.kind {
                ColumnKind::Numeric => {
                    let vals: Vec<f64> = rows.iter().map(|r| r[j].as_num().unwrap_or(0.0)).collect();
                    let mut sorted = vals.clone();
                    sorted.sort_by(f64::total_cmp);
                    marginals.push(Marginal::Numeric(sorted));
                    vals
                }
                ColumnKind::Categorical => {
                    let mut categories: Vec<String> =
                        rows.iter().filter_map(|r| r[j].as_cat().map(str::to_owned)).collect();
                    categories.sort();
                    categories.dedup();
                    let keys: Vec<f64> = rows
                        .iter()
                        .map(|r| {
                            let v = r[j].as_cat().unwrap_or_default();
                            categories.binary_search_by(|c| c.as_str().cmp(v)).unwrap_or(0) as f64
                        })
                        .collect();
                    let mut probs = vec![0.0; categories.len()];
                    for &k in &keys {
                        probs[k as usize] += 1.0 / n as f64;
                    }
                    marginals.push(Marginal::Categorical { categories, probs });
                    keys
                }
            };
            let constant = keys.iter().all(|&k| k == keys[0]);
            scores.push((!constant && j != group.column).then(|| {
                average_ranks(&keys)
                    .into_iter()
                    .map(|r| normal.inverse_cdf(r / (n as f64 + 1.0)))
                    .collect()
            }));
        }

        let mut c = DMatrix::<f64>::identity(d, d);
        let stats: Vec<Option<(f64, f64)>> = scores
            .iter()
            .map(|s| {
                s.as_ref().map(|z| {
                    let m = z.iter().sum::<f64>() / n as f64;
                    let ss = z.iter().map(|x| (x - m).powi(2)).sum::<f64>();
                    (m, ss.sqrt())
                })
            })
            .collect();
        for a in 0..d {
            for b in (a + 1)..d {
                if let (Some(za), Some(zb), Some((ma, sa)), Some((mb, sb))) =
                    (&scores[a], &scores[b], stats[a], stats[b])
                {
                    let cov: f64 = za.iter().zip(zb).map(|(x, y)| (x - ma) * (y - mb)).sum();
                    let r = (cov / (sa * sb)).clamp(-1.0, 1.0);
                    c[(a, b)] = r;
                    c[(b, a)] = r;
                }
            }
        }
        let (corr, factor) = project_psd(c);
        Ok(CopulaGenerator {
            group: group.clone(),
            target: target.to_owned(),
            marginals,
            correlation: to_rows(&corr),
            factor: to_rows(&factor),
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Record> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate(n, &mut rng)
    }
}

impl Generator for CopulaGenerator {
    fn generate(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Record> {
        let normal = std_normal();
        let d = self.marginals.len();
        (0..n)
            .map(|_| {
                let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                (0..d)
                    .map(|i| {
                        if i == self.group.column {
                            return Value::Cat(self.target.clone());
                        }
                        let z: f64 = self.factor[i].iter().zip(&eps).map(|(a, e)| a * e).sum();
                        self.marginals[i].inverse(normal.cdf(z))
                    })
                    .collect()
            })
            .collect()
    }
}

fn check_schema(a: &Dataset, b: &Dataset) -> Result<(), SynthError> {
    if a.schema() == b.schema() {
        Ok(())
    } else {
        Err(SynthError::SchemaMismatch)
    }
}

fn kl(p_counts: &[f64], q_counts: &[f64]) -> f64 {
    let bins = p_counts.len() as f64;
    let np: f64 = p_counts.iter().sum();
    let nq: f64 = q_counts.iter().sum();
    p_counts
        .iter()
        .zip(q_counts)
        .map(|(a, b)| {
            let p = (a + 1.0) / (np + bins);
            let q = (b + 1.0) / (nq + bins);
            p * (p / q).ln()
        })
        .sum()
}

/// `exp(-mean KL(real || synth))` over columns, using a shared 20-bin
/// histogram per numeric column and the category table per categorical
/// column, both with add-one smoothing.
pub fn kl_similarity(real: &Dataset, synth: &Dataset) -> Result<f64, SynthError> {
    check_schema(real, synth)?;
    if real.is_empty() || synth.is_empty() {
        return Err(SynthError::TooFewRows { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    let cols = real.schema().columns();
    for (j, col) in cols.iter().enumerate() {
        let (p, q) = match col.kind {
            ColumnKind::Numeric => {
                let values = |ds: &Dataset| -> Vec<f64> {
                    ds.rows().iter().filter_map(|r| r[j].as_num()).collect()
                };
                let (a, b) = (values(real), values(synth));
                let lo = a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
                let hi = a.iter().chain(&b).copied().fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / KL_BINS as f64;
                let hist = |xs: &[f64]| {
                    let mut h = vec![0.0; KL_BINS];
                    for &x in xs {
                        let bin = if width > 0.0 {
                            (((x - lo) / width) as usize).min(KL_BINS - 1)
                        } else {
                            0
                        };
                        h[bin] += 1.0;
                    }
                    h
                };
                (hist(&a), hist(&b))
            }
            ColumnKind::Categorical => {
                let mut cats = real.categories(j);
                cats.extend(synth.categories(j));
                cats.sort();
                cats.dedup();
                let table = |ds: &Dataset| {
                    let mut h = vec![0.0; cats.len()];
                    for r in ds.rows() {
                        if let Some(v) = r[j].as_cat() {
                            if let Ok(k) = cats.binary_search_by(|c| c.as_str().cmp(v)) {
                                h[k] += 1.0;
                            }
                        }
                    }
                    h
                };
                (table(real), table(synth))
            }
        };
        total += kl(&p, &q);
    }
    Ok((-total / cols.len() as f64).exp())
}

fn mean_cov(x: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len() as f64;
    let mut m = DVector::zeros(dim);
    for r in x {
        m += DVector::from_column_slice(r);
    }
    m /= n;
    let mut c = DMatrix::zeros(dim, dim);
    for r in x {
        let d = DVector::from_column_slice(r) - &m;
        c += &d * d.transpose();
    }
    c /= n - 1.0;
    (m, c)
}

fn sym_sqrt(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt())) * v.transpose()
}

fn trace_sqrt_product(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> f64 {
    let s = sym_sqrt(c1);
    let inner = &s * c2 * &s;
    let inner = (&inner + inner.transpose()) * 0.5;
    SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum()
}

/// Fréchet distance between two Gaussians.
pub fn frechet_distance_gaussian(
    m1: &DVector<f64>,
    c1: &DMatrix<f64>,
    m2: &DVector<f64>,
    c2: &DMatrix<f64>,
) -> f64 {
    let diff = (m1 - m2).norm_squared();
    // both orders, so the result is exactly symmetric
    let cross = 0.5 * (trace_sqrt_product(c1, c2) + trace_sqrt_product(c2, c1));
    (diff + c1.trace() + c2.trace() - 2.0 * cross).max(0.0)
}

/// Fréchet distance between Gaussian fits of the encoded rows. The encoder
/// is fitted on both datasets together.
pub fn frechet_distance(real: &Dataset, synth: &Dataset) -> Result<f64, SynthError> {
    check_schema(real, synth)?;
    for ds in [real, synth] {
        if ds.len() < 2 {
            return Err(SynthError::TooFewRows { needed: 2, got: ds.len() });
        }
    }
    let union = real.concat(synth).canonical();
    let enc = FeatureEncoder::fit(&union, true);
    let xa = enc.encode_all(real.canonical().rows())?;
    let xb = enc.encode_all(synth.canonical().rows())?;
    let (m1, c1) = mean_cov(&xa, enc.dim());
    let (m2, c2) = mean_cov(&xb, enc.dim());
    Ok(frechet_distance_gaussian(&m1, &c1, &m2, &c2))
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// How well a logistic regression tells real (1) from synthetic (0) rows:
/// mean ROC-AUC over 5 cross-validation folds. 0.5 means indistinguishable.
pub fn detection_auc(real: &Dataset, synth: &Dataset, seed: u64) -> Result<f64, SynthError> {
    check_schema(real, synth)?;
    for ds in [real, synth] {
        if ds.len() < 10 {
            return Err(SynthError::TooFewRows { needed: 10, got: ds.len() });
        }
    }
    let (real, synth) = (real.canonical(), synth.canonical());
    let union = real.concat(&synth);
    let enc = FeatureEncoder::fit(&union.canonical(), true);
    let x = enc.encode_all(union.rows())?;
    let y: Vec<bool> = (0..union.len()).map(|i| i < real.len()).collect();

    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cfg = TrainConfig::default();
    let mut aucs = Vec::new();
    for fold in 0..DETECTION_FOLDS {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..idx.len()).partition(|p| p % DETECTION_FOLDS == fold);
        let tx: Vec<Vec<f64>> = train.iter().map(|&p| x[idx[p]].clone()).collect();
        let ty: Vec<bool> = train.iter().map(|&p| y[idx[p]]).collect();
        let (w, b, _) = fit_logistic(&tx, &ty, &cfg);
        let scores: Vec<f64> = test
            .iter()
            .map(|&p| b + x[idx[p]].iter().zip(&w).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let labels: Vec<bool> = test.iter().map(|&p| y[idx[p]]).collect();
        if let Some(a) = roc_auc(&scores, &labels) {
            aucs.push(a);
        }
    }
    Ok(if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    })
}

/// `|F1(trained on real) - F1(trained on synthetic)|` on the same test set.
pub fn downstream_f1_loss(
    real_train: &Dataset,
    synth_train: &Dataset,
    test: &Dataset,
) -> Result<f64, SynthError> {
    check_schema(real_train, synth_train)?;
    check_schema(real_train, test)?;
    let cfg = TrainConfig::default();
    let a = evaluate(&train_logreg(real_train, &cfg)?, test)?.f1;
    let b = evaluate(&train_logreg(synth_train, &cfg)?, test)?.f1;
    Ok((a - b).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationQuality {
    pub fid: f64,
    pub kl: f64,
    pub lgd: f64,
    pub f1_loss: f64,
}
