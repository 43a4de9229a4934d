//! Decision-tree learners and the fitted tree model they share.
//!
//! * [`fit_cart`]: binary Gini splits, cost-complexity pruning, surrogates.
//! * [`fit_j48`]: gain-ratio splits with C4.5 pessimistic or reduced-error
//!   pruning.
//! * [`fit_ctree`]: splits gated by Bonferroni-adjusted association tests.

mod cart;
mod ctree;
mod frame;
mod j48;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::space::{builtin_space, Configuration, SpaceError};
use crate::Learner;

pub use cart::fit_cart;
pub use ctree::fit_ctree;
pub use j48::fit_j48;

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("invalid {learner} parameters: {source}")]
    Params {
        learner: Learner,
        #[source]
        source: SpaceError,
    },
    #[error("no training rows")]
    NoRows,
    #[error("instance has {found} values, model expects {expected}")]
    Arity { found: usize, expected: usize },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// Test applied at an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Split {
    /// `value < threshold` goes to child 0, the rest to child 1.
    Numeric { feature: usize, threshold: f64 },
    /// Level `l` goes to child `branch[l]`.
    Categorical { feature: usize, branch: Vec<usize> },
}

impl Split {
    pub fn feature(&self) -> usize {
        match self {
            Split::Numeric { feature, .. } | Split::Categorical { feature, .. } => *feature,
        }
    }

    /// Child index for a raw cell value, `None` when the cell is missing or
    /// holds a level the split does not know.
    pub fn route(&self, value: f64) -> Option<usize> {
        if value.is_nan() {
            return None;
        }
        match self {
            Split::Numeric { threshold, .. } => Some(if value < *threshold { 0 } else { 1 }),
            Split::Categorical { branch, .. } => branch.get(value as usize).copied(),
        }
    }
}

/// Backup split used when the primary split's feature is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub split: Split,
    /// Swap the two children of `split`.
    pub flipped: bool,
    pub agreement: f64,
}

impl Surrogate {
    fn route(&self, value: f64) -> Option<usize> {
        self.split
            .route(value)
            .map(|c| if self.flipped { 1 - c } else { c })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<usize>,
    pub class_counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surrogates: Vec<Surrogate>,
}

impl Node {
    pub fn leaf(class_counts: Vec<u32>) -> Self {
        Self {
            split: None,
            children: Vec::new(),
            class_counts,
            surrogates: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn total(&self) -> u32 {
        self.class_counts.iter().sum()
    }
}

/// What happens when an instance lacks the value a split tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingRule {
    /// Follow the child that received more training instances.
    Majority,
    /// Try surrogates, then stop at the node.
    SurrogateOrStop,
    /// Try surrogates, then follow the majority child.
    SurrogateOrMajority,
}

/// A fitted tree. Nodes are stored in preorder with the root first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub learner: Learner,
    pub n_features: usize,
    pub n_classes: usize,
    pub laplace: bool,
    pub missing: MissingRule,
    pub root: usize,
    nodes: Vec<Node>,
}

impl TreeModel {
    /// Builds a model from explicit nodes, checking that they form a single
    /// tree rooted at node 0 with consistent class counts.
    pub fn from_nodes(
        learner: Learner,
        n_features: usize,
        n_classes: usize,
        nodes: Vec<Node>,
    ) -> Result<Self, TreeError> {
        let model = Self {
            learner,
            n_features,
            n_classes,
            laplace: false,
            missing: MissingRule::Majority,
            root: 0,
            nodes,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::Malformed(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || std::mem::replace(&mut seen[i], true) {
                return bad(format!("node {i} is missing or reached twice"));
            }
            let node = &self.nodes[i];
            if node.class_counts.len() != self.n_classes {
                return bad(format!("node {i} has {} class counts", node.class_counts.len()));
            }
            match &node.split {
                None if !node.children.is_empty() => return bad(format!("leaf {i} has children")),
                Some(_) if node.children.len() < 2 => {
                    return bad(format!("internal node {i} has fewer than 2 children"))
                }
                Some(s) if s.feature() >= self.n_features => {
                    return bad(format!("node {i} splits on unknown feature {}", s.feature()))
                }
                Some(_) => {
                    let sum: u32 = node.children.iter().filter_map(|&c| self.nodes.get(c)).map(Node::total).sum();
                    if sum != node.total() {
                        return bad(format!("children of node {i} hold {sum} of {} instances", node.total()));
                    }
                }
                None => {}
            }
            stack.extend(node.children.iter().rev());
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Internal nodes plus leaves.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            nodes[i].children.iter().map(|&c| 1 + go(nodes, c)).max().unwrap_or(0)
        }
        go(&self.nodes, self.root)
    }

    fn majority_child(&self, node: &Node) -> usize {
        let mut best = 0;
        for (k, &c) in node.children.iter().enumerate() {
            if self.nodes[c].total() > self.nodes[node.children[best]].total() {
                best = k;
            }
        }
        best
    }

    /// Node reached by an instance; `value(j)` returns the raw cell of
    /// feature `j`. Empty leaves defer to their nearest non-empty ancestor.
    fn reach(&self, value: impl Fn(usize) -> f64) -> &Node {
        let mut at = &self.nodes[self.root];
        let mut last_filled = at;
        while let Some(split) = &at.split {
            let next = match split.route(value(split.feature())) {
                Some(c) if c < at.children.len() => Some(c),
                Some(_) => Some(self.majority_child(at)),
                None => match self.missing {
                    MissingRule::Majority => Some(self.majority_child(at)),
                    rule => at
                        .surrogates
                        .iter()
                        .find_map(|s| s.route(value(s.split.feature())))
                        .or_else(|| (rule == MissingRule::SurrogateOrMajority).then(|| self.majority_child(at))),
                },
            };
            match next {
                Some(c) => at = &self.nodes[at.children[c]],
                None => break,
            }
            if at.total() > 0 {
                last_filled = at;
            }
        }
        if at.total() > 0 {
            at
        } else {
            last_filled
        }
    }

    fn distribution(&self, node: &Node) -> Vec<f64> {
        let total = node.total() as f64;
        if self.laplace {
            let denom = total + self.n_classes as f64;
            node.class_counts.iter().map(|&c| (c as f64 + 1.0) / denom).collect()
        } else if total == 0.0 {
            vec![1.0 / self.n_classes as f64; self.n_classes]
        } else {
            node.class_counts.iter().map(|&c| c as f64 / total).collect()
        }
    }

    fn check_arity(&self, instance: &[f64]) -> Result<(), TreeError> {
        if instance.len() != self.n_features {
            return Err(TreeError::Arity {
                found: instance.len(),
                expected: self.n_features,
            });
        }
        Ok(())
    }

    /// Class distribution for a raw instance (`NaN` = missing).
    pub fn predict_proba(&self, instance: &[f64]) -> Result<Vec<f64>, TreeError> {
        self.check_arity(instance)?;
        Ok(self.distribution(self.reach(|j| instance[j])))
    }

    /// Majority class of the reached leaf, lowest index on ties.
    pub fn predict(&self, instance: &[f64]) -> Result<usize, TreeError> {
        self.check_arity(instance)?;
        Ok(argmax(&self.reach(|j| instance[j]).class_counts))
    }

    /// Predicts dataset rows without copying them out.
    pub fn predict_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<usize>, TreeError> {
        if data.n_features() != self.n_features {
            return Err(TreeError::Arity {
                found: data.n_features(),
                expected: self.n_features,
            });
        }
        let cols: Vec<&[f64]> = data.features().iter().map(|f| f.raw()).collect();
        Ok(rows
            .iter()
            .map(|&r| argmax(&self.reach(|j| cols[j][r]).class_counts))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| TreeError::Malformed(e.to_string()))?;
        model.check()?;
        Ok(model)
    }
}

pub(crate) fn argmax(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Fits `learner` on `rows` of `data` with a configuration from its builtin
/// space. `seed` drives the learner's own randomness (holdout folds, feature
/// subsampling).
pub fn fit(
    learner: Learner,
    data: &Dataset,
    rows: &[usize],
    config: &Configuration,
    seed: u64,
) -> Result<TreeModel, TreeError> {
    match learner {
        Learner::J48 => fit_j48(data, rows, config, seed),
        Learner::Cart => fit_cart(data, rows, config, seed),
        Learner::Ctree => fit_ctree(data, rows, config, seed),
    }
}

pub(crate) fn checked(
    learner: Learner,
    data: &Dataset,
    rows: &[usize],
    config: &Configuration,
) -> Result<(), TreeError> {
    if rows.is_empty() {
        return Err(TreeError::NoRows);
    }
    let space = builtin_space(learner, data.n_features().max(1))
        .map_err(|source| TreeError::Params { learner, source })?;
    space
        .check(config)
        .map_err(|source| TreeError::Params { learner, source })
}

/// Intermediate tree used while growing and pruning.
#[derive(Debug, Clone)]
pub(crate) struct Grown {
    pub split: Option<Split>,
    pub counts: Vec<u32>,
    pub children: Vec<Grown>,
    pub surrogates: Vec<Surrogate>,
}

impl Grown {
    pub fn leaf(counts: Vec<u32>) -> Self {
        Self {
            split: None,
            counts,
            children: Vec::new(),
            surrogates: Vec::new(),
        }
    }

    pub fn make_leaf(&mut self) {
        self.split = None;
        self.children.clear();
        self.surrogates.clear();
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Training instances not in the majority class.
    pub fn errors(&self) -> u32 {
        self.total() - self.counts.iter().max().copied().unwrap_or(0)
    }

    pub fn leaf_errors(&self) -> u32 {
        if self.is_leaf() {
            self.errors()
        } else {
            self.children.iter().map(Grown::leaf_errors).sum()
        }
    }

    pub fn into_model(
        self,
        learner: Learner,
        n_features: usize,
        laplace: bool,
        missing: MissingRule,
    ) -> TreeModel {
        fn push(g: Grown, nodes: &mut Vec<Node>) -> usize {
            let at = nodes.len();
            nodes.push(Node {
                split: g.split,
                children: Vec::new(),
                class_counts: g.counts,
                surrogates: g.surrogates,
            });
            let kids: Vec<usize> = g.children.into_iter().map(|c| push(c, nodes)).collect();
            nodes[at].children = kids;
            at
        }
        let n_classes = self.counts.len();
        let mut nodes = Vec::new();
        push(self, &mut nodes);
        TreeModel {
            learner,
            n_features,
            n_classes,
            laplace,
            missing,
            root: 0,
            nodes,
        }
    }
}
