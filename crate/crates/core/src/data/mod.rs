//! Labeled tabular datasets: representation, ingestion, fold plans and metrics.

mod arff;
mod delimited;
mod folds;
mod metrics;
mod openml;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use arff::{load_arff, parse_arff};
pub use delimited::{load_csv, write_csv, CsvOptions, LabelColumn};
pub use folds::{stratified_folds, FoldPlan};
pub use metrics::{balanced_accuracy, tree_size, ConfusionMatrix};
pub use openml::{fetch_openml, OpenMlClient, DEFAULT_OPENML_URL};

/// Errors raised while building, loading or splitting datasets.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("empty dataset")]
    Empty,
    #[error("label column {0} missing")]
    LabelMissing(String),
    #[error("malformed ARFF header: {0}")]
    ArffHeader(String),
    #[error("data row {row} has {found} values, expected {expected}")]
    Arity {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("sparse ARFF unsupported")]
    SparseArff,
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("class {class} has {count} instances, fewer than k={k}")]
    NotStratifiable {
        class: String,
        count: usize,
        k: usize,
    },
    #[error("HTTP failure fetching {url}: status {status}")]
    Http { url: String, status: u16 },
    #[error("transport failure fetching {url}: {message}")]
    Transport { url: String, message: String },
    #[error("OpenML dataset {0}: id not found")]
    IdNotFound(i64),
    #[error("cache write failure at {path}: {source}")]
    CacheWrite {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("confusion matrix has no test instances")]
    NoTestInstances,
}

/// Kind of a feature column. Categorical levels are frozen at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

/// A single cell as seen by callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Number(f64),
    Category(u32),
    Missing,
}

/// One feature column. Values are stored as `f64`; categorical cells hold the
/// level index and missing cells are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
    values: Vec<f64>,
}

impl FeatureColumn {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            values: values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        levels: Vec<String>,
        values: Vec<Option<u32>>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical { levels },
            values: values
                .into_iter()
                .map(|v| v.map_or(f64::NAN, f64::from))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Number of declared levels, 0 for numeric columns.
    pub fn level_count(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { levels } => levels.len(),
            FeatureKind::Numeric => 0,
        }
    }

    /// Raw storage: `NaN` marks a missing cell.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, row: usize) -> Cell {
        let v = self.values[row];
        if v.is_nan() {
            Cell::Missing
        } else if self.is_categorical() {
            Cell::Category(v as u32)
        } else {
            Cell::Number(v)
        }
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    fn validate(&self) -> Result<(), DataError> {
        match &self.kind {
            FeatureKind::Numeric => {
                if self.values.iter().any(|v| v.is_infinite()) {
                    return Err(DataError::Invalid(format!(
                        "column {} holds a non-finite number",
                        self.name
                    )));
                }
            }
            FeatureKind::Categorical { levels } => {
                let n = levels.len() as f64;
                if self
                    .values
                    .iter()
                    .any(|v| !v.is_nan() && (*v < 0.0 || *v >= n || v.fract() != 0.0))
                {
                    return Err(DataError::Invalid(format!(
                        "column {} holds a category index outside its {} levels",
                        self.name,
                        levels.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A labeled dataset. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub external_id: Option<i64>,
    features: Vec<FeatureColumn>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    #[serde(skip)]
    sorted: OnceLock<Vec<Vec<u32>>>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.external_id == other.external_id
            && self.labels == other.labels
            && self.class_names == other.class_names
            && self.features.len() == other.features.len()
            && self.features.iter().zip(&other.features).all(|(a, b)| {
                a.name == b.name
                    && a.kind == b.kind
                    && a.values.len() == b.values.len()
                    && a.values.iter().zip(&b.values).all(|(x, y)| {
                        x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())
                    })
            })
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<FeatureColumn>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        for f in &features {
            if f.len() != n {
                return Err(DataError::Invalid(format!(
                    "column {} has {} cells, expected {n}",
                    f.name,
                    f.len()
                )));
            }
            f.validate()?;
        }
        let mut counts = vec![0usize; class_names.len()];
        for &y in &labels {
            if y >= class_names.len() {
                return Err(DataError::Invalid(format!(
                    "class index {y} outside {} classes",
                    class_names.len()
                )));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(DataError::Invalid(format!(
                "class {} has no instances",
                class_names[c]
            )));
        }
        Ok(Self {
            name: name.into(),
            external_id: None,
            features,
            labels,
            class_names,
            sorted: OnceLock::new(),
        })
    }

    pub fn with_external_id(mut self, id: i64) -> Self {
        self.external_id = Some(id);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[FeatureColumn] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureColumn {
        &self.features[j]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// True when every class holds at least `k` instances.
    pub fn stratifiable(&self, k: usize) -> bool {
        self.class_counts().iter().all(|&c| c >= k)
    }

    /// Every class has at least 10 examples, the admission rule for 10-fold
    /// stratified assessment.
    pub fn stratifiable_10(&self) -> bool {
        self.stratifiable(10)
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().any(FeatureColumn::has_missing)
    }

    /// Copies one row's raw feature values (`NaN` = missing).
    pub fn row(&self, row: usize) -> Vec<f64> {
        self.features.iter().map(|f| f.values[row]).collect()
    }

    /// Row indices sorted by value for every numeric column, missing cells
    /// dropped. Computed once and shared by all learners fitted on this data.
    pub(crate) fn sorted_rows(&self) -> &[Vec<u32>] {
        self.sorted.get_or_init(|| {
            self.features
                .iter()
                .map(|f| {
                    if f.is_categorical() {
                        return Vec::new();
                    }
                    let mut idx: Vec<u32> = (0..self.len() as u32)
                        .filter(|&i| !f.values[i as usize].is_nan())
                        .collect();
                    idx.sort_by(|&a, &b| {
                        f.values[a as usize]
                            .total_cmp(&f.values[b as usize])
                            .then(a.cmp(&b))
                    });
                    idx
                })
                .collect()
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_columns() {
        let f = FeatureColumn::numeric("a", vec![Some(1.0)]);
        let err = Dataset::new("x", vec![f], vec![0, 0], vec!["a".into()]).unwrap_err();
        assert!(matches!(err, DataError::Invalid(_)));
    }

    #[test]
    fn rejects_empty_class() {
        let f = FeatureColumn::numeric("a", vec![Some(1.0), Some(2.0)]);
        let err =
            Dataset::new("x", vec![f], vec![0, 0], vec!["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, DataError::Invalid(_)));
    }

    #[test]
    fn cells_round_trip_through_storage() {
        let f = FeatureColumn::categorical("c", vec!["x".into(), "y".into()], vec![Some(1), None]);
        assert_eq!(f.cell(0), Cell::Category(1));
        assert_eq!(f.cell(1), Cell::Missing);
        let g = FeatureColumn::numeric("n", vec![Some(2.5), None]);
        assert_eq!(g.cell(0), Cell::Number(2.5));
        assert!(g.has_missing());
    }

    #[test]
    fn sorted_rows_skip_missing() {
        let f = FeatureColumn::numeric("a", vec![Some(3.0), None, Some(1.0), Some(2.0)]);
        let d = Dataset::new("x", vec![f], vec![0, 0, 0, 0], vec!["a".into()]).unwrap();
        assert_eq!(d.sorted_rows()[0], vec![2, 3, 0]);
    }
}
