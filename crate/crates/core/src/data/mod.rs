//! Tabular datasets: schema, CSV ingestion, imputation, stratified
//! partitioning, class weights and a synthetic category-structured generator.

mod split;
mod synthetic;

pub use split::{balanced_class_weights, stratified_kfold, stratified_split, stratified_split_indices, FoldPlan};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved category written into missing categorical cells by [`impute_zero`].
pub const MISSING_TOKEN: &str = "__MISSING__";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),
    #[error("cannot parse cell at record {row}, column `{column}`: {value:?}")]
    UnparsableCell { row: usize, column: String, value: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("class `{0}` has fewer than two records")]
    ClassTooSmall(String),
    #[error("class `{class}` has {count} records, fewer than k = {k}")]
    ClassSmallerThanK { class: String, count: usize, k: usize },
    #[error("class id {0} has no records")]
    AbsentClass(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// A feature column. Categorical columns carry their vocabulary; the code of
/// a category is its position in `vocabulary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
}

impl Column {
    pub fn numeric(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: FeatureKind::Numeric, vocabulary: Vec::new() }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: FeatureKind::Categorical, vocabulary: Vec::new() }
    }

    fn code_of(&mut self, value: &str) -> usize {
        match self.vocabulary.iter().position(|v| v == value) {
            Some(c) => c,
            None => {
                self.vocabulary.push(value.to_string());
                self.vocabulary.len() - 1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
    pub label_column: String,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>, label_column: impl Into<String>) -> Result<Self> {
        let schema = FeatureSchema { columns, label_column: label_column.into() };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(DataError::InvalidSchema("at least one feature column is required".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate column `{}`", c.name)));
            }
            if c.name == self.label_column {
                return Err(DataError::InvalidSchema(format!(
                    "label column `{}` is also listed as a feature",
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Builds a schema from a CSV header: every column other than the label is
    /// numeric unless listed in `categorical` or unless some non-empty cell
    /// fails to parse as a number.
    pub fn infer_from_csv(path: impl AsRef<Path>, label_column: &str, categorical: &[String]) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if !headers.iter().any(|h| h == label_column) {
            return Err(DataError::MissingColumn(label_column.to_string()));
        }
        let mut numeric: Vec<bool> = headers.iter().map(|h| !categorical.iter().any(|c| c == h)).collect();
        for rec in rdr.records() {
            let rec = rec?;
            for (k, cell) in rec.iter().enumerate() {
                if numeric[k] && !cell.trim().is_empty() && cell.trim().parse::<f64>().is_err() {
                    numeric[k] = false;
                }
            }
        }
        let columns = headers
            .iter()
            .zip(numeric)
            .filter(|(h, _)| *h != label_column)
            .map(|(h, num)| if num { Column::numeric(h) } else { Column::categorical(h) })
            .collect();
        FeatureSchema::new(columns, label_column)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// True when data encoded with `self` can be routed through a model trained
    /// on `trained`: same names and kinds, and every trained category keeps its
    /// code.
    pub fn is_compatible_with(&self, trained: &FeatureSchema) -> bool {
        self.columns.len() == trained.columns.len()
            && self.columns.iter().zip(&trained.columns).all(|(a, b)| {
                a.name == b.name
                    && a.kind == b.kind
                    && a.vocabulary.len() >= b.vocabulary.len()
                    && a.vocabulary[..b.vocabulary.len()] == b.vocabulary[..]
            })
    }
}

/// Records with numeric and integer-coded categorical features plus a class
/// label. Missing cells are stored as NaN until [`impute_zero`] runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    values: Vec<f64>,
    labels: Vec<usize>,
    classes: Vec<String>,
    ids: Vec<usize>,
}

impl Dataset {
    /// Assembles a dataset from row-major feature values. `ids` defaults to
    /// `0..n` when `None`.
    pub fn from_parts(
        schema: FeatureSchema,
        values: Vec<f64>,
        labels: Vec<usize>,
        classes: Vec<String>,
        ids: Option<Vec<usize>>,
    ) -> Result<Self> {
        schema.validate()?;
        let p = schema.n_features();
        let n = labels.len();
        if values.len() != n * p {
            return Err(DataError::InvalidArgument(format!(
                "expected {} feature values for {n} records x {p} features, got {}",
                n * p,
                values.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(DataError::InvalidArgument(format!("label id {bad} outside {} classes", classes.len())));
        }
        for (k, col) in schema.columns.iter().enumerate() {
            if col.kind == FeatureKind::Categorical {
                let vocab = col.vocabulary.len() as f64;
                for i in 0..n {
                    let v = values[i * p + k];
                    if !v.is_nan() && (v < 0.0 || v >= vocab || v.fract() != 0.0) {
                        return Err(DataError::InvalidArgument(format!(
                            "categorical code {v} in column `{}` is outside its vocabulary",
                            col.name
                        )));
                    }
                }
            }
        }
        let ids = ids.unwrap_or_else(|| (0..n).collect());
        if ids.len() != n {
            return Err(DataError::InvalidArgument("ids length differs from record count".into()));
        }
        Ok(Dataset { schema, values, labels, classes, ids })
    }

    /// Convenience constructor for all-numeric data with string labels.
    pub fn from_numeric_rows(feature_names: &[&str], rows: &[Vec<f64>], labels: &[&str]) -> Result<Self> {
        let schema = FeatureSchema::new(feature_names.iter().map(|n| Column::numeric(*n)).collect(), "label")?;
        if rows.len() != labels.len() {
            return Err(DataError::InvalidArgument("rows and labels differ in length".into()));
        }
        let (classes, ids) = encode_labels(labels.iter().copied());
        let values = rows.iter().flatten().copied().collect();
        Dataset::from_parts(schema, values, ids, classes, None)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_records(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.n_features() + feature]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Record identities; preserved through [`Dataset::subset`].
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn class_index(&self) -> BTreeMap<String, usize> {
        self.classes.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Records at `positions`, in that order. The class list is kept whole so
    /// class ids stay comparable across subsets.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut values = Vec::with_capacity(positions.len() * p);
        for &i in positions {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: self.schema.clone(),
            values,
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            ids: positions.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Appends `other`'s records. Both must share schema and class list.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema || self.classes != other.classes {
            return Err(DataError::InvalidArgument("datasets differ in schema or classes".into()));
        }
        let mut out = self.clone();
        out.values.extend_from_slice(&other.values);
        out.labels.extend_from_slice(&other.labels);
        out.ids.extend_from_slice(&other.ids);
        Ok(out)
    }

    /// Re-encodes categorical codes against `trained`'s vocabularies, appending
    /// unseen categories, so this data can be routed through a model trained on
    /// `trained`.
    pub fn align_to(&self, trained: &FeatureSchema) -> Result<Dataset> {
        if self.schema.columns.len() != trained.columns.len()
            || self.schema.columns.iter().zip(&trained.columns).any(|(a, b)| a.name != b.name || a.kind != b.kind)
        {
            return Err(DataError::InvalidArgument("column names or kinds differ from the trained schema".into()));
        }
        let mut schema = trained.clone();
        schema.label_column = self.schema.label_column.clone();
        let p = self.n_features();
        let mut values = self.values.clone();
        for k in 0..p {
            if self.schema.columns[k].kind != FeatureKind::Categorical {
                continue;
            }
            let remap: Vec<f64> = self.schema.columns[k]
                .vocabulary
                .iter()
                .map(|v| schema.columns[k].code_of(v) as f64)
                .collect();
            for i in 0..self.n_records() {
                let v = values[i * p + k];
                if !v.is_nan() {
                    values[i * p + k] = remap[v as usize];
                }
            }
        }
        Ok(Dataset { schema, values, labels: self.labels.clone(), classes: self.classes.clone(), ids: self.ids.clone() })
    }

    /// Writes the dataset back out as CSV (features then label, categorical
    /// cells as their category text, missing cells empty).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.schema.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(&self.schema.label_column);
        wtr.write_record(&header)?;
        for i in 0..self.n_records() {
            let mut rec: Vec<String> = self
                .row(i)
                .iter()
                .zip(&self.schema.columns)
                .map(|(&v, c)| {
                    if v.is_nan() {
                        String::new()
                    } else if c.kind == FeatureKind::Categorical {
                        c.vocabulary[v as usize].clone()
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            rec.push(self.classes[self.labels[i]].clone());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Maps label strings to contiguous class ids. Classes are ordered
/// numerically when every label is an integer, lexicographically otherwise,
/// so ids never depend on row order.
pub fn encode_labels<'a>(labels: impl Iterator<Item = &'a str> + Clone) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = labels.clone().map(str::to_string).collect::<HashSet<_>>().into_iter().collect();
    if classes.iter().all(|c| c.parse::<i64>().is_ok()) {
        classes.sort_by_key(|c| c.parse::<i64>().unwrap());
    } else {
        classes.sort();
    }
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let ids = labels.map(|l| index[l]).collect();
    (classes, ids)
}

/// Parses a CSV file against `schema`. Columns may appear in any order and
/// extra columns are ignored. Empty cells become missing markers.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let feature_pos: Vec<usize> = schema.columns.iter().map(|c| position(&c.name)).collect::<Result<_>>()?;
    let label_pos = position(&schema.label_column)?;

    let mut schema = schema.clone();
    let p = schema.n_features();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, &pos) in feature_pos.iter().enumerate() {
            let cell = rec.get(pos).unwrap_or("").trim();
            let col = &mut schema.columns[k];
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                match col.kind {
                    FeatureKind::Numeric => cell.parse::<f64>().map_err(|_| DataError::UnparsableCell {
                        row,
                        column: col.name.clone(),
                        value: cell.to_string(),
                    })?,
                    FeatureKind::Categorical => col.code_of(cell) as f64,
                }
            };
            values.push(v);
        }
        let label = rec.get(label_pos).unwrap_or("").trim();
        if label.is_empty() {
            return Err(DataError::UnparsableCell { row, column: schema.label_column.clone(), value: String::new() });
        }
        raw_labels.push(label.to_string());
    }
    if raw_labels.is_empty() {
        return Err(DataError::EmptyFile);
    }
    debug_assert_eq!(values.len(), raw_labels.len() * p);
    let (classes, labels) = encode_labels(raw_labels.iter().map(String::as_str));
    Dataset::from_parts(schema, values, labels, classes, None)
}

/// Replaces missing numeric cells with 0 and missing categorical cells with
/// the reserved [`MISSING_TOKEN`] category.
pub fn impute_zero(d: &Dataset) -> Dataset {
    let mut out = d.clone();
    let p = out.n_features();
    for k in 0..p {
        let any_missing = (0..out.n_records()).any(|i| out.values[i * p + k].is_nan());
        if !any_missing {
            continue;
        }
        let fill = match out.schema.columns[k].kind {
            FeatureKind::Numeric => 0.0,
            FeatureKind::Categorical => out.schema.columns[k].code_of(MISSING_TOKEN) as f64,
        };
        for i in 0..out.n_records() {
            let v = &mut out.values[i * p + k];
            if v.is_nan() {
                *v = fill;
            }
        }
    }
    out
}
