//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use evtfair::scoring::{ScoreError, ScoreModel};
use evtfair::synthgen::CopulaGenerator;
use evtfair::tabular::{Column, ColumnKind, Dataset, GroupSpec, Record, Schema, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn task_schema() -> Schema {
    Schema::new(
        vec![
            Column { name: "x1".into(), kind: ColumnKind::Numeric },
            Column { name: "x2".into(), kind: ColumnKind::Numeric },
            Column { name: "race".into(), kind: ColumnKind::Categorical },
            Column { name: "y".into(), kind: ColumnKind::Numeric },
        ],
        vec!["race".into()],
        "y",
        "1",
    )
    .unwrap()
}

pub fn task_group() -> GroupSpec {
    GroupSpec::resolve(&task_schema(), "race", "White", "Black").unwrap()
}

/// Seed rows: two correlated features and a label that favors the
/// privileged group.
pub fn seed_rows(n_per_group: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * n_per_group);
    for race in ["Black", "White"] {
        for _ in 0..n_per_group {
            let x1: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let x2 = 0.5 * x1 + 0.8 * e;
            let noise: f64 = rng.sample(StandardNormal);
            let bonus = if race == "White" { 0.6 } else { 0.0 };
            let y = (x1 + 0.3 * x2 + bonus + noise > 0.0) as u8 as f64;
            rows.push(vec![Value::Num(x1), Value::Num(x2), Value::Cat(race.into()), Value::Num(y)]);
        }
    }
    Dataset::new(task_schema(), rows).unwrap()
}

/// `n_per_group` copula-generated rows per group, unprivileged first.
pub fn copula_task(n_per_group: usize, seed: u64) -> Dataset {
    let base = seed_rows(600, seed);
    let g = task_group();
    let mut rows = Vec::with_capacity(2 * n_per_group);
    for (i, target) in ["Black", "White"].iter().enumerate() {
        let gen = CopulaGenerator::fit(&base, &g, target).unwrap();
        rows.extend(gen.sample(n_per_group, seed.wrapping_mul(31).wrapping_add(i as u64)));
    }
    Dataset::new(task_schema(), rows).unwrap()
}

/// Value at sorted position `ceil(q n) - 1`: exactly `n - ceil(q n)` distinct
/// values lie strictly above it.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((q * v.len() as f64).ceil() as usize).max(1) - 1]
}

/// `clamp(0.5 + delta(x) * 1[race = White])` with `delta = 0.3` above the
/// `x1` cutoff and `0.01` below it.
pub struct InjectedTail {
    pub cutoff: f64,
}

impl InjectedTail {
    pub fn for_dataset(ds: &Dataset) -> Self {
        let x1: Vec<f64> = ds.rows().iter().map(|r| r[0].as_num().unwrap()).collect();
        InjectedTail { cutoff: percentile(&x1, 0.95) }
    }
}

impl ScoreModel for InjectedTail {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        Ok(rows
            .iter()
            .map(|r| {
                let delta: f64 = if r[0].as_num().unwrap() > self.cutoff { 0.3 } else { 0.01 };
                let on = r[2] == Value::Cat("White".into());
                (0.5 + if on { delta } else { 0.0 }).clamp(0.0, 1.0)
            })
            .collect())
    }

    fn id(&self) -> String {
        "fixture:injected-tail".into()
    }
}

/// Depends on `x1` only.
pub struct Blind;

impl ScoreModel for Blind {
    fn score(&self, rows: &[Record]) -> Result<Vec<f64>, ScoreError> {
        Ok(rows
            .iter()
            .map(|r| 1.0 / (1.0 + (-r[0].as_num().unwrap()).exp()))
            .collect())
    }

    fn id(&self) -> String {
        "fixture:blind".into()
    }
}
