use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Assignment of instances to `k` folds. Indices refer to positions in the
/// row list the plan was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Stratified plan over `labels`. Each class is shuffled and dealt
    /// round-robin, continuing the deal across classes, so every fold gets
    /// the floor or ceiling of its proportional share of each class.
    ///
    /// With `strict`, every class present must hold at least `k` instances.
    pub fn stratified(
        labels: &[usize],
        class_names: &[String],
        k: usize,
        seed: u64,
        strict: bool,
    ) -> Result<Self, DataError> {
        if k < 2 {
            return Err(DataError::Invalid(format!("fold count {k} < 2")));
        }
        if labels.len() < k {
            return Err(DataError::Invalid(format!(
                "{} instances cannot fill {k} folds",
                labels.len()
            )));
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        if strict {
            if let Some((c, rows)) = by_class
                .iter()
                .enumerate()
                .find(|(_, rows)| !rows.is_empty() && rows.len() < k)
            {
                return Err(DataError::NotStratifiable {
                    class: class_names[c].clone(),
                    count: rows.len(),
                    k,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignment = vec![0; labels.len()];
        let mut dealt = 0usize;
        for mut rows in by_class {
            rows.shuffle(&mut rng);
            for i in rows {
                assignment[i] = dealt % k;
                dealt += 1;
            }
        }
        Ok(Self { k, assignment })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Positions held out in fold `fold`.
    pub fn test_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    /// Maps fold `fold` onto the global row ids the plan was built over.
    pub fn split(&self, rows: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
        debug_assert_eq!(rows.len(), self.len());
        let mut train = Vec::with_capacity(rows.len());
        let mut test = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            if self.assignment[i] == fold {
                test.push(r);
            } else {
                train.push(r);
            }
        }
        (train, test)
    }
}

/// Strict stratified `k`-fold plan over a whole dataset.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    FoldPlan::stratified(dataset.labels(), dataset.class_names(), k, seed, true)
}
