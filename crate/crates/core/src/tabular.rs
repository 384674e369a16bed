//! Tabular datasets: schema, CSV ingestion, seeded splits and
//! counterfactual flipping of a protected attribute.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("column `{0}` declared in schema is missing from the CSV header")]
    MissingColumn(String),
    #[error("row {row}: value in column `{column}` does not match its declared kind")]
    TypeMismatch { row: usize, column: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("split ratios must be positive and sum to 1")]
    InvalidRatios,
    #[error("protected value `{0}` is not one of the audited group values")]
    ValueNotInGroup(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("row {row} has {got} values, expected {expected}")]
    RowWidth {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Favorable label values may be written as JSON strings or numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum FavorableRepr {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct Schema {
    columns: Vec<Column>,
    protected: Vec<String>,
    label: String,
    favorable: String,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    columns: Vec<Column>,
    protected: Vec<String>,
    label: String,
    favorable: FavorableRepr,
}

impl TryFrom<SchemaRepr> for Schema {
    type Error = TabularError;

    fn try_from(r: SchemaRepr) -> Result<Self, Self::Error> {
        let favorable = match r.favorable {
            FavorableRepr::Text(s) => s,
            FavorableRepr::Number(n) => n.to_string(),
        };
        Schema::new(r.columns, r.protected, r.label, favorable)
    }
}

impl From<Schema> for SchemaRepr {
    fn from(s: Schema) -> Self {
        SchemaRepr {
            columns: s.columns,
            protected: s.protected,
            label: s.label,
            favorable: FavorableRepr::Text(s.favorable),
        }
    }
}

impl Schema {
    pub fn new(
        columns: Vec<Column>,
        protected: Vec<String>,
        label: impl Into<String>,
        favorable: impl Into<String>,
    ) -> Result<Self, TabularError> {
        let label = label.into();
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TabularError::InvalidSchema(format!(
                    "duplicate column `{}`",
                    c.name
                )));
            }
        }
        if !seen.contains(label.as_str()) {
            return Err(TabularError::InvalidSchema(format!(
                "label `{label}` is not a declared column"
            )));
        }
        for p in &protected {
            if *p == label {
                return Err(TabularError::InvalidSchema(
                    "label column cannot be protected".into(),
                ));
            }
            match columns.iter().find(|c| &c.name == p) {
                None => {
                    return Err(TabularError::InvalidSchema(format!(
                        "protected column `{p}` is not declared"
                    )))
                }
                Some(c) if c.kind != ColumnKind::Categorical => {
                    return Err(TabularError::InvalidSchema(format!(
                        "protected column `{p}` must be categorical"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Schema {
            columns,
            protected,
            label,
            favorable: favorable.into(),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, TabularError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TabularError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn protected(&self) -> &[String] {
        &self.protected
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn favorable(&self) -> &str {
        &self.favorable
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn label_index(&self) -> usize {
        self.index_of(&self.label).expect("validated at construction")
    }

    pub fn is_protected(&self, name: &str) -> bool {
        self.protected.iter().any(|p| p == name)
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Whether `value` in the label column denotes the favorable outcome.
    pub fn is_favorable(&self, value: &Value) -> bool {
        match value {
            Value::Cat(s) => s == &self.favorable,
            Value::Num(x) => self
                .favorable
                .trim()
                .parse::<f64>()
                .map(|f| f == *x)
                .unwrap_or(false),
        }
    }
}

/// A single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    /// Total order used to canonicalize row order (numbers before text).
    pub fn total_cmp(&self, other: &Value) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Cat(a), Value::Cat(b)) => a.cmp(b),
            (Value::Num(_), Value::Cat(_)) => Ordering::Less,
            (Value::Cat(_), Value::Num(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

pub type Record = Vec<Value>;

pub fn cmp_records(a: &Record, b: &Record) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Record>) -> Result<Self, TabularError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.width() {
                return Err(TabularError::RowWidth {
                    row: i,
                    got: row.len(),
                    expected: schema.width(),
                });
            }
            for (col, v) in schema.columns.iter().zip(row) {
                let ok = match (col.kind, v) {
                    (ColumnKind::Numeric, Value::Num(x)) => x.is_finite(),
                    (ColumnKind::Categorical, Value::Cat(_)) => true,
                    _ => false,
                };
                if !ok {
                    return Err(TabularError::TypeMismatch {
                        row: i,
                        column: col.name.clone(),
                    });
                }
            }
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Record> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same schema, different rows. Rows are trusted to conform.
    pub fn with_rows(&self, rows: Vec<Record>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Observed categories of a categorical column, sorted.
    pub fn categories(&self, col: usize) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().filter_map(|r| r[col].as_cat()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        let li = self.schema.label_index();
        self.rows
            .iter()
            .map(|r| self.schema.is_favorable(&r[li]))
            .collect()
    }

    /// Rows whose `group.attribute` equals `value`.
    pub fn filter_value(&self, group: &GroupSpec, value: &str) -> Dataset {
        let rows = self
            .rows
            .iter()
            .filter(|r| r[group.column].as_cat() == Some(value))
            .cloned()
            .collect();
        self.with_rows(rows)
    }

    /// Rows belonging to either side of `group`.
    pub fn filter_group(&self, group: &GroupSpec) -> Dataset {
        let rows = self
            .rows
            .iter()
            .filter(|r| group.contains(r))
            .cloned()
            .collect();
        self.with_rows(rows)
    }

    /// Rows sorted by a fixed total order, so that downstream results do not
    /// depend on the input order.
    pub fn canonical(&self) -> Dataset {
        let mut rows = self.rows.clone();
        rows.sort_by(cmp_records);
        self.with_rows(rows)
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        self.with_rows(rows)
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, TabularError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, TabularError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.width());
    for col in &schema.columns {
        match header.iter().position(|h| h == col.name) {
            Some(p) => positions.push(p),
            None => return Err(TabularError::MissingColumn(col.name.clone())),
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(schema.width());
        for (col, &p) in schema.columns.iter().zip(&positions) {
            let raw = rec.get(p).unwrap_or("");
            let v = match col.kind {
                ColumnKind::Numeric => match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Num(x),
                    _ => {
                        return Err(TabularError::TypeMismatch {
                            row: i,
                            column: col.name.clone(),
                        })
                    }
                },
                ColumnKind::Categorical => Value::Cat(raw.to_owned()),
            };
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TabularError::EmptyDataset);
    }
    Dataset::new(schema.clone(), rows)
}

pub fn write_csv<W: Write>(writer: W, ds: &Dataset) -> Result<(), TabularError> {
    write_columns(writer, ds.schema(), ds.rows(), None)
}

/// Writes `rows` as CSV, optionally skipping one column (used to hide the label).
pub(crate) fn write_columns<W: Write>(
    writer: W,
    schema: &Schema,
    rows: &[Record],
    skip: Option<usize>,
) -> Result<(), TabularError> {
    let mut w = csv::Writer::from_writer(writer);
    let keep: Vec<usize> = (0..schema.width()).filter(|&i| Some(i) != skip).collect();
    w.write_record(keep.iter().map(|&i| schema.columns[i].name.as_str()))?;
    for row in rows {
        w.write_record(keep.iter().map(|&i| format_value(&row[i])))?;
    }
    w.flush()?;
    Ok(())
}

fn format_value(v: &Value) -> String {
    match v {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        Value::Num(x) => format!("{x}"),
        Value::Cat(s) => s.clone(),
    }
}

/// Shuffles with `seed` and cuts into train/valid/test. Sizes are floored and
/// the remainder goes to train.
pub fn split(
    ds: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), TabularError> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(TabularError::InvalidRatios);
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (b * n as f64).floor() as usize;
    let n_test = (c * n as f64).floor() as usize;
    let n_train = n - n_valid - n_test;
    let take = |ids: &[usize]| ds.with_rows(ids.iter().map(|&i| ds.rows[i].clone()).collect());
    Ok((
        take(&idx[..n_train]),
        take(&idx[n_train..n_train + n_valid]),
        take(&idx[n_train + n_valid..]),
    ))
}

/// A pair of values of one protected attribute: the audited groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub attribute: String,
    pub privileged: String,
    pub unprivileged: String,
    /// Position of `attribute` in the schema.
    pub column: usize,
}

impl GroupSpec {
    /// Resolves the attribute against the schema only.
    pub fn resolve(
        schema: &Schema,
        attribute: &str,
        privileged: &str,
        unprivileged: &str,
    ) -> Result<Self, TabularError> {
        if !schema.is_protected(attribute) {
            return Err(TabularError::InvalidGroup(format!(
                "`{attribute}` is not a protected column"
            )));
        }
        if privileged == unprivileged {
            return Err(TabularError::InvalidGroup(
                "privileged and unprivileged values must differ".into(),
            ));
        }
        Ok(GroupSpec {
            attribute: attribute.to_owned(),
            privileged: privileged.to_owned(),
            unprivileged: unprivileged.to_owned(),
            column: schema.index_of(attribute).expect("protected columns exist"),
        })
    }

    /// Resolves and additionally checks both values occur in `ds`.
    pub fn new(
        ds: &Dataset,
        attribute: &str,
        privileged: &str,
        unprivileged: &str,
    ) -> Result<Self, TabularError> {
        let g = Self::resolve(ds.schema(), attribute, privileged, unprivileged)?;
        let cats = ds.categories(g.column);
        for v in [privileged, unprivileged] {
            if !cats.iter().any(|c| c == v) {
                return Err(TabularError::InvalidGroup(format!(
                    "value `{v}` does not occur in column `{attribute}`"
                )));
            }
        }
        Ok(g)
    }

    pub fn value_of<'a>(&self, row: &'a Record) -> Option<&'a str> {
        row.get(self.column).and_then(Value::as_cat)
    }

    pub fn contains(&self, row: &Record) -> bool {
        matches!(self.value_of(row), Some(v) if v == self.privileged || v == self.unprivileged)
    }

    pub fn is_privileged(&self, row: &Record) -> bool {
        self.value_of(row) == Some(self.privileged.as_str())
    }

    /// The other value of the pair.
    pub fn counterpart(&self, value: &str) -> Option<&str> {
        if value == self.privileged {
            Some(&self.unprivileged)
        } else if value == self.unprivileged {
            Some(&self.privileged)
        } else {
            None
        }
    }
}

/// The counterfactual of `row`: the audited attribute swapped between the two
/// group values, everything else (including other protected columns) untouched.
pub fn flip_protected(row: &Record, group: &GroupSpec) -> Result<Record, TabularError> {
    let current = group
        .value_of(row)
        .ok_or_else(|| TabularError::ValueNotInGroup(String::new()))?;
    let other = group
        .counterpart(current)
        .ok_or_else(|| TabularError::ValueNotInGroup(current.to_owned()))?
        .to_owned();
    let mut out = row.clone();
    out[group.column] = Value::Cat(other);
    Ok(out)
}
