use serde::{Deserialize, Serialize};

use super::DataError;
use crate::trees::TreeModel;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let c = rows.len();
        let mut m = Self::new(c);
        for (t, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "confusion matrix must be square");
            for (p, &v) in row.iter().enumerate() {
                m.counts[t * c + p] = v;
            }
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
            .iter()
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: u64 = (0..self.n_classes).map(|c| self.get(c, c)).sum();
        hits as f64 / self.total() as f64
    }
}

/// Mean per-class recall. Classes absent from the test split are left out
/// of the mean.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, DataError> {
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..cm.n_classes() {
        let n = cm.row_sum(c);
        if n > 0 {
            sum += cm.get(c, c) as f64 / n as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(DataError::NoTestInstances);
    }
    Ok(sum / present as f64)
}

/// Total node count, internal nodes plus leaves.
pub fn tree_size(model: &TreeModel) -> usize {
    model.node_count()
}
