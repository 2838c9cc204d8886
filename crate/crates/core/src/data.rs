//! Tabular data: feature schema, instances, CSV ingestion, imputation,
//! splitting and the empirical per-feature distributions used by mutation.
//!
//! Categorical values are stored as indices into the schema's allowed value
//! list and target labels as class indices (`0` or `1`) into the schema's
//! two target labels. Rendering back to strings always goes through the
//! schema.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class index into [`Target::labels`].
pub type Label = usize;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{column}` is present in the CSV but not in the schema")]
    UnexpectedColumn { column: String },
    #[error("column `{column}` is declared in the schema but missing from the CSV header")]
    MissingColumn { column: String },
    #[error("row {row}: value `{value}` is not an allowed category of column `{column}`")]
    UnknownCategory {
        column: String,
        row: usize,
        value: String,
    },
    #[error("target column has {} distinct labels ({}), expected exactly two", found.len(), found.join(", "))]
    NonBinaryTarget { found: Vec<String> },
    #[error("row {row}: target label `{value}` is not one of the schema labels")]
    UnknownLabel { row: usize, value: String },
    #[error("column `{column}` has no observed values")]
    EmptyColumn { column: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("instance does not match schema: {0}")]
    InvalidInstance(String),
}

/// Per-feature sampler state built from a reference dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Empirical {
    /// Relative frequency of every allowed category, in schema order.
    Categorical { frequencies: Vec<f64> },
    /// Observed values; sampling draws uniformly from this multiset.
    Continuous { observed: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Categorical { values: Vec<String> },
    Continuous { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub empirical: Option<Empirical>,
}

impl FeatureSpec {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// `max - min` for continuous features, `0` for categorical ones.
    pub fn range(&self) -> f64 {
        match self.kind {
            FeatureKind::Continuous { min, max } => max - min,
            FeatureKind::Categorical { .. } => 0.0,
        }
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { values } => values.iter().position(|v| v == value),
            FeatureKind::Continuous { .. } => None,
        }
    }

    pub fn category_name(&self, index: usize) -> &str {
        match &self.kind {
            FeatureKind::Categorical { values } => &values[index],
            FeatureKind::Continuous { .. } => panic!("feature `{}` is not categorical", self.name),
        }
    }

    /// Draws one value from the empirical distribution.
    ///
    /// Panics when the distribution has not been built; see
    /// [`build_empirical_distributions`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FeatureValue {
        match self.empirical.as_ref().expect("empirical distribution not built") {
            Empirical::Categorical { frequencies } => {
                let mut u: f64 = rng.gen();
                for (i, &p) in frequencies.iter().enumerate() {
                    if u < p {
                        return FeatureValue::Category(i);
                    }
                    u -= p;
                }
                // rounding slack: fall back to the last category with mass
                let last = frequencies.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                FeatureValue::Category(last)
            }
            Empirical::Continuous { observed } => {
                FeatureValue::Number(observed[rng.gen_range(0..observed.len())])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub labels: [String; 2],
}

impl Target {
    pub fn label_index(&self, value: &str) -> Option<Label> {
        self.labels.iter().position(|l| l == value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub target: Target,
}

// On-disk schema layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    features: Vec<FeatureEntry>,
    target: Target,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FeatureEntry {
    Categorical {
        name: String,
        values: Vec<String>,
    },
    Continuous {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

impl FeatureSchema {
    /// Parses a JSON schema document. Continuous features without explicit
    /// bounds get `[NaN, NaN]` until [`load_dataset`] fills them from data.
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let file: SchemaFile =
            serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        let features = file
            .features
            .into_iter()
            .map(|entry| match entry {
                FeatureEntry::Categorical { name, values } => FeatureSpec {
                    name,
                    kind: FeatureKind::Categorical { values },
                    empirical: None,
                },
                FeatureEntry::Continuous { name, min, max } => FeatureSpec {
                    name,
                    kind: FeatureKind::Continuous {
                        min: min.unwrap_or(f64::NAN),
                        max: max.unwrap_or(f64::NAN),
                    },
                    empirical: None,
                },
            })
            .collect();
        let schema = FeatureSchema {
            features,
            target: file.target,
        };
        schema.check_structure(true)?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| DataError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            features: self
                .features
                .iter()
                .map(|f| match &f.kind {
                    FeatureKind::Categorical { values } => FeatureEntry::Categorical {
                        name: f.name.clone(),
                        values: values.clone(),
                    },
                    FeatureKind::Continuous { min, max } => FeatureEntry::Continuous {
                        name: f.name.clone(),
                        min: Some(*min),
                        max: Some(*max),
                    },
                })
                .collect(),
            target: self.target.clone(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    fn check_structure(&self, allow_unbounded: bool) -> Result<(), DataError> {
        let mut seen = HashMap::new();
        for (i, f) in self.features.iter().enumerate() {
            if seen.insert(f.name.as_str(), i).is_some() {
                return Err(DataError::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            match &f.kind {
                FeatureKind::Categorical { values } => {
                    if values.is_empty() {
                        return Err(DataError::Schema(format!(
                            "categorical feature `{}` has no allowed values",
                            f.name
                        )));
                    }
                    let mut distinct: Vec<&String> = values.iter().collect();
                    distinct.sort();
                    distinct.dedup();
                    if distinct.len() != values.len() {
                        return Err(DataError::Schema(format!(
                            "categorical feature `{}` lists a value twice",
                            f.name
                        )));
                    }
                }
                FeatureKind::Continuous { min, max } => {
                    let unbounded = min.is_nan() || max.is_nan();
                    if unbounded && !allow_unbounded {
                        return Err(DataError::Schema(format!(
                            "continuous feature `{}` has no bounds",
                            f.name
                        )));
                    }
                    if !unbounded && min > max {
                        return Err(DataError::Schema(format!(
                            "continuous feature `{}` has min > max",
                            f.name
                        )));
                    }
                }
            }
        }
        if seen.contains_key(self.target.name.as_str()) {
            return Err(DataError::Schema(format!(
                "target `{}` is also listed as a feature",
                self.target.name
            )));
        }
        if self.target.labels[0] == self.target.labels[1] {
            return Err(DataError::Schema("target labels must be distinct".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn label_name(&self, label: Label) -> &str {
        &self.target.labels[label]
    }

    pub fn categorical_count(&self) -> usize {
        self.features.iter().filter(|f| f.is_categorical()).count()
    }

    pub fn has_empirical(&self) -> bool {
        self.features.iter().all(|f| f.empirical.is_some())
    }

    /// Checks arity, kinds and categorical membership.
    pub fn validate(&self, x: &Instance) -> Result<(), DataError> {
        if x.len() != self.len() {
            return Err(DataError::InvalidInstance(format!(
                "expected {} values, got {}",
                self.len(),
                x.len()
            )));
        }
        for (spec, value) in self.features.iter().zip(x.values()) {
            match (&spec.kind, value) {
                (FeatureKind::Categorical { values }, FeatureValue::Category(c)) => {
                    if *c >= values.len() {
                        return Err(DataError::InvalidInstance(format!(
                            "category index {c} out of range for `{}`",
                            spec.name
                        )));
                    }
                }
                (FeatureKind::Continuous { .. }, FeatureValue::Number(v)) => {
                    if !v.is_finite() {
                        return Err(DataError::InvalidInstance(format!(
                            "non-finite value for `{}`",
                            spec.name
                        )));
                    }
                }
                _ => {
                    return Err(DataError::InvalidInstance(format!(
                        "value kind does not match feature `{}`",
                        spec.name
                    )))
                }
            }
        }
        Ok(())
    }

    /// Parses one textual value for feature `index`.
    pub fn parse_value(&self, index: usize, text: &str) -> Option<FeatureValue> {
        let spec = &self.features[index];
        match &spec.kind {
            FeatureKind::Categorical { .. } => spec.category_index(text).map(FeatureValue::Category),
            FeatureKind::Continuous { .. } => text.trim().parse::<f64>().ok().filter(|v| v.is_finite()).map(FeatureValue::Number),
        }
    }

    /// Renders one value as text (category name or shortest float form).
    pub fn format_value(&self, index: usize, value: &FeatureValue) -> String {
        match value {
            FeatureValue::Category(c) => self.features[index].category_name(*c).to_string(),
            FeatureValue::Number(v) => format!("{v}"),
        }
    }
}

/// A single attribute value.
#[derive(Debug, Clone, Copy)]
pub enum FeatureValue {
    Category(usize),
    Number(f64),
}

impl FeatureValue {
    pub fn as_number(&self) -> f64 {
        match self {
            FeatureValue::Number(v) => *v,
            FeatureValue::Category(_) => panic!("categorical value used as a number"),
        }
    }

    pub fn as_category(&self) -> usize {
        match self {
            FeatureValue::Category(c) => *c,
            FeatureValue::Number(_) => panic!("numeric value used as a category"),
        }
    }
}

// Exact equality: continuous values compare bit-for-bit.
impl PartialEq for FeatureValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FeatureValue::Category(a), FeatureValue::Category(b)) => a == b,
            (FeatureValue::Number(a), FeatureValue::Number(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for FeatureValue {}

impl Hash for FeatureValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            FeatureValue::Category(c) => {
                0u8.hash(state);
                c.hash(state);
            }
            FeatureValue::Number(v) => {
                1u8.hash(state);
                v.to_bits().hash(state);
            }
        }
    }
}

/// One point of the feature space, aligned with the schema's feature order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance(Vec<FeatureValue>);

impl Instance {
    pub fn new(values: Vec<FeatureValue>) -> Self {
        Instance(values)
    }

    pub fn values(&self) -> &[FeatureValue] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [FeatureValue] {
        &mut self.0
    }

    pub fn get(&self, feature: usize) -> &FeatureValue {
        &self.0[feature]
    }

    pub fn set(&mut self, feature: usize, value: FeatureValue) {
        self.0[feature] = value;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Builds an instance from `name -> text` pairs.
    pub fn from_pairs(schema: &FeatureSchema, pairs: &[(&str, &str)]) -> Result<Self, DataError> {
        let mut values = vec![None; schema.len()];
        for (name, text) in pairs {
            let idx = schema
                .feature_index(name)
                .ok_or_else(|| DataError::InvalidInstance(format!("unknown feature `{name}`")))?;
            values[idx] = Some(schema.parse_value(idx, text).ok_or_else(|| {
                DataError::InvalidInstance(format!("cannot parse `{text}` for `{name}`"))
            })?);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    DataError::InvalidInstance(format!("missing value for `{}`", schema.features[i].name))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Instance(values))
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> InstanceDisplay<'a> {
        InstanceDisplay { x: self, schema }
    }
}

pub struct InstanceDisplay<'a> {
    x: &'a Instance,
    schema: &'a FeatureSchema,
}

impl fmt::Display for InstanceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.x.values().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} = {}", self.schema.features[i].name, self.schema.format_value(i, v))?;
        }
        write!(f, "}}")
    }
}

/// Freshly parsed rows; cells that were blank or unparseable are `None`.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<Option<FeatureValue>>>,
    pub labels: Vec<Option<Label>>,
}

impl RawDataset {
    pub fn missing_cells(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_none()).count()
    }
}

/// Fully imputed rows with optional target labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Instance>,
    pub labels: Vec<Option<Label>>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Instance>, labels: Vec<Option<Label>>) -> Self {
        assert_eq!(rows.len(), labels.len());
        Dataset { schema, rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn is_missing_marker(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a CSV file against a schema file. Columns are matched by name,
/// so the CSV may order them freely.
pub fn load_dataset(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<RawDataset, DataError> {
    let schema = FeatureSchema::load(schema_path)?;
    let csv_path = csv_path.as_ref();
    let file = File::open(csv_path).map_err(|source| DataError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    read_dataset(file, schema)
}

/// Same as [`load_dataset`] over any reader.
pub fn read_dataset<R: Read>(reader: R, mut schema: FeatureSchema) -> Result<RawDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();

    // column position for each schema feature, plus the target column
    let mut positions = vec![None; schema.len()];
    let mut target_pos = None;
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if name == schema.target.name {
            target_pos = Some(col);
        } else if let Some(idx) = schema.feature_index(name) {
            positions[idx] = Some(col);
        } else {
            return Err(DataError::UnexpectedColumn { column: name.to_string() });
        }
    }
    let positions = positions
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.ok_or_else(|| DataError::MissingColumn {
                column: schema.features[i].name.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let target_pos = target_pos.ok_or_else(|| DataError::MissingColumn {
        column: schema.target.name.clone(),
    })?;

    let mut rows = Vec::new();
    let mut raw_labels: Vec<Option<String>> = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.len());
        for (feat, &col) in positions.iter().enumerate() {
            let cell = record.get(col).unwrap_or("").trim();
            if is_missing_marker(cell) {
                row.push(None);
                continue;
            }
            let spec = &schema.features[feat];
            match &spec.kind {
                FeatureKind::Categorical { .. } => match spec.category_index(cell) {
                    Some(c) => row.push(Some(FeatureValue::Category(c))),
                    None => {
                        return Err(DataError::UnknownCategory {
                            column: spec.name.clone(),
                            row: row_idx,
                            value: cell.to_string(),
                        })
                    }
                },
                FeatureKind::Continuous { .. } => {
                    row.push(schema.parse_value(feat, cell));
                }
            }
        }
        let label = record.get(target_pos).unwrap_or("").trim();
        raw_labels.push((!is_missing_marker(label)).then(|| label.to_string()));
        rows.push(row);
    }

    let mut distinct: Vec<String> = raw_labels.iter().flatten().cloned().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(DataError::NonBinaryTarget { found: distinct });
    }
    let labels = raw_labels
        .into_iter()
        .enumerate()
        .map(|(row, l)| match l {
            None => Ok(None),
            Some(l) => schema
                .target
                .label_index(&l)
                .map(Some)
                .ok_or(DataError::UnknownLabel { row, value: l }),
        })
        .collect::<Result<Vec<_>, _>>()?;

    // fill unspecified continuous bounds from the observed values
    for (feat, spec) in schema.features.iter_mut().enumerate() {
        if let FeatureKind::Continuous { min, max } = &mut spec.kind {
            if min.is_nan() || max.is_nan() {
                let observed = rows.iter().filter_map(|r| r[feat].map(|v| v.as_number()));
                let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                if lo > hi {
                    // no observations at all; leave a degenerate range
                    *min = 0.0;
                    *max = 0.0;
                } else {
                    if min.is_nan() {
                        *min = lo;
                    }
                    if max.is_nan() {
                        *max = hi;
                    }
                }
            }
        }
    }
    schema.check_structure(false)?;

    Ok(RawDataset { schema, rows, labels })
}

/// Replaces missing continuous cells by the column mean and missing
/// categorical cells by the column mode (ties go to the earlier category).
pub fn impute_missing(raw: RawDataset) -> Result<Dataset, DataError> {
    let RawDataset { schema, mut rows, labels } = raw;
    for (feat, spec) in schema.features.iter().enumerate() {
        if rows.iter().all(|r| r[feat].is_some()) {
            continue;
        }
        let fill = match &spec.kind {
            FeatureKind::Continuous { .. } => {
                let observed: Vec<f64> = rows.iter().filter_map(|r| r[feat].map(|v| v.as_number())).collect();
                if observed.is_empty() {
                    return Err(DataError::EmptyColumn { column: spec.name.clone() });
                }
                FeatureValue::Number(observed.iter().sum::<f64>() / observed.len() as f64)
            }
            FeatureKind::Categorical { values } => {
                let mut counts = vec![0usize; values.len()];
                for c in rows.iter().filter_map(|r| r[feat].map(|v| v.as_category())) {
                    counts[c] += 1;
                }
                let best = counts.iter().copied().max().unwrap_or(0);
                if best == 0 {
                    return Err(DataError::EmptyColumn { column: spec.name.clone() });
                }
                FeatureValue::Category(counts.iter().position(|&c| c == best).unwrap())
            }
        };
        for row in rows.iter_mut() {
            if row[feat].is_none() {
                row[feat] = Some(fill);
            }
        }
    }
    let rows = rows
        .into_iter()
        .map(|r| Instance(r.into_iter().map(|v| v.expect("imputed")).collect()))
        .collect();
    Ok(Dataset { schema, rows, labels })
}

/// Random partition into `(train, test)` with `round(n * train_frac)` rows
/// in the training part.
pub fn train_test_split(ds: &Dataset, train_frac: f64, seed: u64) -> (Dataset, Dataset) {
    assert!(train_frac > 0.0 && train_frac < 1.0, "train_frac must lie in (0, 1)");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (ds.len() as f64 * train_frac).round() as usize;
    let (train, test) = order.split_at(n_train);
    (ds.subset(train), ds.subset(test))
}

/// Returns a copy of the schema with per-feature samplers built from `ds`.
pub fn build_empirical_distributions(ds: &Dataset) -> Result<FeatureSchema, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut schema = ds.schema.clone();
    let n = ds.len() as f64;
    for (feat, spec) in schema.features.iter_mut().enumerate() {
        spec.empirical = Some(match &spec.kind {
            FeatureKind::Categorical { values } => {
                let mut counts = vec![0usize; values.len()];
                for row in &ds.rows {
                    counts[row.get(feat).as_category()] += 1;
                }
                Empirical::Categorical {
                    frequencies: counts.iter().map(|&c| c as f64 / n).collect(),
                }
            }
            FeatureKind::Continuous { .. } => Empirical::Continuous {
                observed: ds.rows.iter().map(|r| r.get(feat).as_number()).collect(),
            },
        });
    }
    Ok(schema)
}
