//! Counterfactual discrimination and average-case group fairness metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{predict, ScoreError, ScoreModel};
use crate::tabular::{flip_protected, Dataset, GroupSpec, Record, TabularError};

#[derive(Debug, Error)]
pub enum DiscriminationError {
    #[error("no samples")]
    EmptySamples,
    #[error("no values")]
    EmptyValues,
    #[error("group value `{0}` has no rows")]
    MissingGroup(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
}

/// A record and the change in favorable-outcome probability when only its
/// audited protected attribute is flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdSample {
    pub row: Record,
    pub cd: f64,
    pub synthetic: bool,
}

/// `score(flip(row)) - score(row)` for every row, in two batched score calls.
pub fn compute_cd<M: ScoreModel + ?Sized>(
    model: &M,
    rows: &[Record],
    group: &GroupSpec,
) -> Result<Vec<CdSample>, DiscriminationError> {
    compute_cd_marked(model, rows.to_vec(), group, false)
}

pub(crate) fn compute_cd_marked<M: ScoreModel + ?Sized>(
    model: &M,
    rows: Vec<Record>,
    group: &GroupSpec,
    synthetic: bool,
) -> Result<Vec<CdSample>, DiscriminationError> {
    let flipped = rows
        .iter()
        .map(|r| flip_protected(r, group))
        .collect::<Result<Vec<_>, _>>()?;
    let base = model.score(&rows)?;
    let cf = model.score(&flipped)?;
    if base.len() != rows.len() || cf.len() != rows.len() {
        return Err(ScoreError::ExternalModelFailure(format!(
            "expected {} scores, got {} and {}",
            rows.len(),
            base.len(),
            cf.len()
        ))
        .into());
    }
    Ok(rows
        .into_iter()
        .zip(base.iter().zip(&cf))
        .map(|(row, (y, y_cf))| CdSample {
            row,
            cd: y_cf - y,
            synthetic,
        })
        .collect())
}

/// Mean counterfactual discrimination.
pub fn acd(samples: &[CdSample]) -> Result<f64, DiscriminationError> {
    if samples.is_empty() {
        return Err(DiscriminationError::EmptySamples);
    }
    Ok(samples.iter().map(|s| s.cd).sum::<f64>() / samples.len() as f64)
}

pub const DEFAULT_CVAR_ALPHA: f64 = 0.95;

/// Empirical `alpha`-quantile taking the next-higher order statistic.
pub fn quantile_higher(values: &[f64], alpha: f64) -> Result<f64, DiscriminationError> {
    if values.is_empty() {
        return Err(DiscriminationError::EmptyValues);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DiscriminationError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = alpha * (v.len() - 1) as f64;
    // absorb representation error such as 0.9 * 9 = 8.100000000000001
    let idx = ((pos - 1e-9).ceil().max(0.0) as usize).min(v.len() - 1);
    Ok(v[idx])
}

/// Mean of all values at or above the `alpha`-quantile.
pub fn cvar(values: &[f64], alpha: f64) -> Result<f64, DiscriminationError> {
    let q = quantile_higher(values, alpha)?;
    let tail: Vec<f64> = values.iter().copied().filter(|&v| v >= q).collect();
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub aod: f64,
    pub eod: f64,
    pub spd: f64,
    /// `None` when the privileged group is never predicted favorable.
    pub di: Option<f64>,
}

#[derive(Default)]
struct Rates {
    tp: usize,
    fn_: usize,
    fp: usize,
    tn: usize,
}

impl Rates {
    fn n(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    fn favorable_rate(&self) -> f64 {
        ratio(self.tp + self.fp, self.n())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// AOD, EOD, SPD and DI of `model` on `test` between the two group values.
/// Rows outside the group are ignored.
pub fn group_metrics<M: ScoreModel + ?Sized>(
    model: &M,
    test: &Dataset,
    group: &GroupSpec,
) -> Result<GroupMetrics, DiscriminationError> {
    let scores = model.score(test.rows())?;
    group_metrics_from_scores(&scores, test, group)
}

pub(crate) fn group_metrics_from_scores(
    scores: &[f64],
    test: &Dataset,
    group: &GroupSpec,
) -> Result<GroupMetrics, DiscriminationError> {
    let pred = predict(scores);
    let truth = test.labels();
    let (mut p, mut u) = (Rates::default(), Rates::default());
    for ((row, &yhat), &y) in test.rows().iter().zip(&pred).zip(&truth) {
        let r = match group.value_of(row) {
            Some(v) if v == group.privileged => &mut p,
            Some(v) if v == group.unprivileged => &mut u,
            _ => continue,
        };
        match (y, yhat) {
            (true, true) => r.tp += 1,
            (true, false) => r.fn_ += 1,
            (false, true) => r.fp += 1,
            (false, false) => r.tn += 1,
        }
    }
    for (rates, name) in [(&p, &group.privileged), (&u, &group.unprivileged)] {
        if rates.n() == 0 {
            return Err(DiscriminationError::MissingGroup(name.clone()));
        }
    }
    let dtpr = (u.tpr() - p.tpr()).abs();
    let dfpr = (u.fpr() - p.fpr()).abs();
    let (fu, fp) = (u.favorable_rate(), p.favorable_rate());
    Ok(GroupMetrics {
        aod: 0.5 * (dtpr + dfpr),
        eod: dtpr,
        spd: (fu - fp).abs(),
        di: (fp > 0.0).then(|| fu / fp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ConstantModel;
    use crate::tabular::{Column, ColumnKind, Schema, Value};

    fn schema() -> Schema {
        Schema::new(
            vec![
                Column { name: "x".into(), kind: ColumnKind::Numeric },
                Column { name: "race".into(), kind: ColumnKind::Categorical },
                Column { name: "y".into(), kind: ColumnKind::Numeric },
            ],
            vec!["race".into()],
            "y",
            "1",
        )
        .unwrap()
    }

    fn row(x: f64, race: &str, y: f64) -> Record {
        vec![Value::Num(x), Value::Cat(race.into()), Value::Num(y)]
    }

    fn group() -> GroupSpec {
        GroupSpec::resolve(&schema(), "race", "W", "B").unwrap()
    }

    /// 0.5 + 0.2 for privileged rows; column 0 used as a per-row score otherwise.
    struct Biased;

    impl ScoreModel for Biased {
        fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
            Ok(rows
                .iter()
                .map(|r| if r[1] == Value::Cat("W".into()) { 0.7 } else { 0.5 })
                .collect())
        }
        fn id(&self) -> String {
            "biased".into()
        }
    }

    /// Predicts from column 0 directly.
    struct Oracle;

    impl ScoreModel for Oracle {
        fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
            Ok(rows.iter().map(|r| r[0].as_num().unwrap()).collect())
        }
        fn id(&self) -> String {
            "oracle".into()
        }
    }

    #[test]
    fn cd_direction() {
        let rows = vec![row(0.0, "B", 1.0), row(0.0, "W", 1.0)];
        let cds = compute_cd(&Biased, &rows, &group()).unwrap();
        assert!((cds[0].cd - 0.2).abs() < 1e-12);
        assert!((cds[1].cd + 0.2).abs() < 1e-12);
        let flat = compute_cd(&ConstantModel { probability: 0.4 }, &rows, &group()).unwrap();
        assert!(flat.iter().all(|s| s.cd == 0.0));
    }

    #[test]
    fn cd_rejects_outside_values() {
        let rows = vec![row(0.0, "A", 1.0)];
        assert!(compute_cd(&Biased, &rows, &group()).is_err());
    }

    #[test]
    fn acd_cases() {
        let s = |cd| CdSample { row: vec![], cd, synthetic: false };
        assert_eq!(acd(&[s(0.1), s(-0.1)]).unwrap(), 0.0);
        assert!((acd(&[s(0.05), s(0.05), s(0.05)]).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(acd(&[]), Err(DiscriminationError::EmptySamples)));
    }

    #[test]
    fn cvar_cases() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(cvar(&v, 0.9).unwrap(), 0.9);
        assert_eq!(cvar(&[0.3; 7], 0.95).unwrap(), 0.3);
        // alpha * (n - 1) = 1.5 -> index 2 -> quantile 3
        assert_eq!(cvar(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 3.5);
        assert!(matches!(cvar(&[], 0.5), Err(DiscriminationError::EmptyValues)));
    }

    #[test]
    fn metrics_fixture() {
        // privileged W: positives predicted 1,1 (TPR 1), negatives 0,0 (FPR 0)
        // unprivileged B: positives 1,0 (TPR .5), negatives 1,0 (FPR .5)
        let rows = vec![
            row(0.9, "W", 1.0),
            row(0.9, "W", 1.0),
            row(0.1, "W", 0.0),
            row(0.1, "W", 0.0),
            row(0.9, "B", 1.0),
            row(0.1, "B", 1.0),
            row(0.9, "B", 0.0),
            row(0.1, "B", 0.0),
        ];
        let ds = Dataset::new(schema(), rows).unwrap();
        let m = group_metrics(&Oracle, &ds, &group()).unwrap();
        assert_eq!(m.eod, 0.5);
        assert_eq!(m.aod, 0.5);
        assert_eq!(m.spd, 0.0);
        assert_eq!(m.di, Some(1.0));
    }

    #[test]
    fn parity_fixture() {
        // favorable rate 0.2 for B, 0.4 for W
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push(row(if i < 1 { 0.9 } else { 0.1 }, "B", 1.0));
            rows.push(row(if i < 2 { 0.9 } else { 0.1 }, "W", 1.0));
        }
        let ds = Dataset::new(schema(), rows).unwrap();
        let m = group_metrics(&Oracle, &ds, &group()).unwrap();
        assert!((m.spd - 0.2).abs() < 1e-12);
        assert!((m.di.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_groups() {
        let rows = vec![row(0.9, "W", 1.0), row(0.1, "W", 0.0), row(0.9, "B", 1.0), row(0.1, "B", 0.0)];
        let ds = Dataset::new(schema(), rows).unwrap();
        let m = group_metrics(&Oracle, &ds, &group()).unwrap();
        assert_eq!((m.aod, m.eod, m.spd, m.di), (0.0, 0.0, 0.0, Some(1.0)));
        let only_w = Dataset::new(schema(), vec![row(0.9, "W", 1.0)]).unwrap();
        assert!(matches!(
            group_metrics(&Oracle, &only_w, &group()),
            Err(DiscriminationError::MissingGroup(_))
        ));
    }
}
