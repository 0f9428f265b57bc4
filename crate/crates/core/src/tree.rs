//! CART decision tree over the four evaluation features.
//!
//! Splits minimize weighted child Gini impurity. Candidate thresholds are the
//! midpoints between consecutive distinct feature values, and a record goes
//! left iff `feature <= threshold`. Split scores are compared in exact integer
//! arithmetic so ties resolve by (lower feature index, lower threshold)
//! regardless of floating-point rounding.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 4] = ["y1", "c1", "y2", "c2"];
pub const DEFAULT_MAX_DEPTH: usize = 6;
pub const DEFAULT_MIN_SAMPLES_LEAF: usize = 5;

/// The fused feature vector `(y1, c1, y2, c2)` for one statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub y1: u8,
    pub c1: f64,
    pub y2: i8,
    pub c2: f64,
}

impl EvalRecord {
    pub fn new(y1: u8, c1: f64, y2: i8, c2: f64) -> Result<Self> {
        let unit = |c: f64| (0.0..=1.0).contains(&c);
        if y1 > 1 || !(-1..=1).contains(&y2) || !unit(c1) || !unit(c2) {
            return Err(Error::Validation(alloc::format!(
                "evaluation record out of range: y1={y1} c1={c1} y2={y2} c2={c2}"
            )));
        }
        Ok(Self { y1, c1, y2, c2 })
    }

    /// Record used when no trusted statement matched: neutral, zero confidence.
    pub fn without_contradiction(y1: u8, c1: f64) -> Self {
        Self { y1, c1, y2: -1, c2: 0.0 }
    }

    pub fn features(&self) -> [f64; 4] {
        [f64::from(self.y1), self.c1, f64::from(self.y2), self.c2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `usize::MAX` for unbounded.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            min_samples_leaf: DEFAULT_MIN_SAMPLES_LEAF,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        verdict: u8,
        /// Training records per class, `[rejected, accepted]`.
        counts: [usize; 2],
    },
}

/// A trained tree stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    params: TreeParams,
}

/// Gini impurity `1 - sum (n_i / n)^2` of a two-class node.
pub fn gini(counts: [usize; 2]) -> Result<f64> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(Error::UndefinedImpurity);
    }
    let n = n as f64;
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    Ok(1.0 - (p0 * p0 + p1 * p1))
}

fn majority(counts: [usize; 2]) -> u8 {
    u8::from(counts[1] >= counts[0])
}

fn class_counts(labels: &[u8], rows: &[usize]) -> [usize; 2] {
    rows.iter().fold([0, 0], |mut acc, &r| {
        acc[labels[r] as usize] += 1;
        acc
    })
}

/// Weighted child Gini is `1 - score / n` with
/// `score = (l0^2 + l1^2) / nl + (r0^2 + r1^2) / nr`, so minimizing impurity
/// maximizes `score`. Kept as an exact fraction.
#[derive(Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let sq = |c: [usize; 2]| (c[0] as u128).pow(2) + (c[1] as u128).pow(2);
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        Self {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: SplitScore,
}

fn best_split(features: &[[f64; 4]], labels: &[u8], rows: &[usize], min_leaf: usize) -> Option<Candidate> {
    let total = class_counts(labels, rows);
    let n = rows.len();
    let mut best: Option<Candidate> = None;
    let mut sorted = rows.to_vec();
    for feature in 0..4 {
        sorted.sort_by(|&a, &b| features[a][feature].total_cmp(&features[b][feature]));
        let mut left = [0usize; 2];
        for k in 0..n - 1 {
            left[labels[sorted[k]] as usize] += 1;
            let lo = features[sorted[k]][feature];
            let hi = features[sorted[k + 1]][feature];
            if lo == hi {
                continue;
            }
            let n_left = k + 1;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = SplitScore::new(left, right);
            if best.as_ref().is_none_or(|b| score.beats(&b.score)) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

/// Greedy recursive partitioning with Gini impurity.
///
/// Growth stops at pure nodes, at `max_depth`, or when no split leaves at
/// least `min_samples_leaf` records on both sides. Leaves vote by majority
/// with ties going to accept.
pub fn train(records: &[EvalRecord], labels: &[u8], params: TreeParams) -> Result<DecisionTree> {
    if records.is_empty() {
        return Err(Error::Size("cannot train on zero records".into()));
    }
    if records.len() != labels.len() {
        return Err(Error::Shape {
            expected: records.len(),
            actual: labels.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Validation(alloc::format!("label {bad} outside {{0,1}}")));
    }
    let features: Vec<[f64; 4]> = records.iter().map(EvalRecord::features).collect();
    let rows: Vec<usize> = (0..records.len()).collect();
    let mut nodes = Vec::new();
    grow(&features, labels, &rows, 0, params, &mut nodes);
    Ok(DecisionTree { nodes, params })
}

fn grow(features: &[[f64; 4]], labels: &[u8], rows: &[usize], depth: usize, params: TreeParams, nodes: &mut Vec<Node>) -> usize {
    let counts = class_counts(labels, rows);
    let id = nodes.len();
    let leaf = Node::Leaf {
        verdict: majority(counts),
        counts,
    };
    let pure = counts[0] == 0 || counts[1] == 0;
    if pure || depth >= params.max_depth {
        nodes.push(leaf);
        return id;
    }
    let Some(split) = best_split(features, labels, rows, params.min_samples_leaf.max(1)) else {
        nodes.push(leaf);
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| features[r][split.feature] <= split.threshold);
    nodes.push(Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: 0,
        right: 0,
    });
    let left = grow(features, labels, &left_rows, depth + 1, params, nodes);
    let right = grow(features, labels, &right_rows, depth + 1, params, nodes);
    if let Node::Split { left: l, right: r, .. } = &mut nodes[id] {
        *l = left;
        *r = right;
    }
    id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

/// One comparison on the way from the root to a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: String,
    /// `"<="` when the left branch was taken, `">"` otherwise.
    pub comparison: String,
    pub threshold: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub verdict: u8,
}

impl fmt::Display for DecisionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            write!(f, "{} {} {} -> ", step.feature, step.comparison, step.threshold)?;
        }
        write!(f, "{}", if self.verdict == 1 { "accept" } else { "reject" })
    }
}

impl DecisionTree {
    /// Rebuilds a tree from preorder nodes, checking that child links are
    /// well-formed.
    pub fn from_nodes(nodes: Vec<Node>, params: TreeParams) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("tree has no nodes".into()));
        }
        let mut referenced = vec![false; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split { feature, threshold, left, right } => {
                    if feature >= 4 || !threshold.is_finite() {
                        return Err(Error::Validation(alloc::format!("node {i}: invalid split")));
                    }
                    for child in [left, right] {
                        if child <= i || child >= nodes.len() || referenced[child] {
                            return Err(Error::Validation(alloc::format!("node {i}: bad child {child}")));
                        }
                        referenced[child] = true;
                    }
                }
                Node::Leaf { verdict, .. } => {
                    if verdict > 1 {
                        return Err(Error::Validation(alloc::format!("node {i}: verdict {verdict}")));
                    }
                }
            }
        }
        if referenced.iter().skip(1).any(|r| !r) {
            return Err(Error::Validation("tree has unreachable nodes".into()));
        }
        Ok(Self { nodes, params })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, record: &EvalRecord) -> u8 {
        let x = record.features();
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { verdict, .. } => return verdict,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn explain(&self, record: &EvalRecord) -> DecisionPath {
        let x = record.features();
        let mut steps = Vec::new();
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { verdict, .. } => return DecisionPath { steps, verdict },
                Node::Split { feature, threshold, left, right } => {
                    let go_left = x[feature] <= threshold;
                    steps.push(PathStep {
                        feature: FEATURE_NAMES[feature].into(),
                        comparison: if go_left { "<=" } else { ">" }.into(),
                        threshold,
                        branch: if go_left { Branch::Left } else { Branch::Right },
                    });
                    i = if go_left { left } else { right };
                }
            }
        }
    }
}
