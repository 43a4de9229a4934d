//! Hyperparameter tuning of decision-tree learners.
//!
//! The crate bundles the pieces of a tuning study:
//!
//! * [`data`]: datasets, ARFF/CSV/OpenML ingestion, stratified folds, metrics;
//! * [`space`]: typed hyperparameter spaces with conditional parameters;
//! * [`trees`]: CART-, C4.5- and conditional-inference-style learners;
//! * [`tuners`]: random search, GA, PSO, EDA, SMBO and iterated racing;
//! * [`harness`]: nested cross-validation experiments and their logs;
//! * [`stats`]: Wilcoxon, Friedman and Nemenyi comparisons;
//! * [`importance`]: fANOVA hyperparameter importance;
//! * [`complexity`]: data-complexity measures and tuning advice.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod complexity;
pub mod data;
pub mod forest;
pub mod harness;
pub mod importance;
pub mod space;
pub mod stats;
pub mod trees;
pub mod tuners;

mod seeds;

pub use data::{Dataset, DataError};
pub use space::{builtin_space, Configuration, ParamSpace, Value};
pub use trees::TreeModel;

/// The three tree learners whose hyperparameters are tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    J48,
    Cart,
    Ctree,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::J48, Learner::Cart, Learner::Ctree];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::J48 => "j48",
            Learner::Cart => "cart",
            Learner::Ctree => "ctree",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Learner {
    type Err = space::SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "j48" => Ok(Learner::J48),
            "cart" | "rpart" => Ok(Learner::Cart),
            "ctree" => Ok(Learner::Ctree),
            _ => Err(space::SpaceError::UnknownLearner(s.to_string())),
        }
    }
}
