use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::numeric::{argmax, Prng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary classification tree over sparse inputs; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(dist: Vec<f64>) -> Self {
        Self {
            nodes: vec![Node::Leaf { dist }],
        }
    }

    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Invalid("tree without nodes".into()));
        }
        for node in &nodes {
            if let Node::Split { left, right, .. } = node {
                if *left >= n || *right >= n {
                    return Err(Error::Invalid("tree child index out of range".into()));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Class distribution of the leaf reached by `x`.
    pub fn leaf_dist(&self, x: &SparseVector) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x.get(*feature) <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        argmax(self.leaf_dist(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Bagging,
    Adaboost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    kind: EnsembleKind,
    n_classes: usize,
    trees: Vec<DecisionTree>,
    tree_weights: Vec<f64>,
}

impl TreeEnsemble {
    pub fn new(kind: EnsembleKind, n_classes: usize, trees: Vec<DecisionTree>, tree_weights: Vec<f64>) -> Result<Self> {
        if trees.is_empty() || trees.len() != tree_weights.len() {
            return Err(Error::Invalid("an ensemble needs one weight per tree and at least one tree".into()));
        }
        Ok(Self {
            kind,
            n_classes,
            trees,
            tree_weights,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_weights(&self) -> &[f64] {
        &self.tree_weights
    }

    /// Bagging averages leaf distributions; boosting tallies each tree's
    /// weighted hard vote. Either way the result sums to 1.
    pub fn predict(&self, x: &SparseVector) -> (usize, Vec<f64>) {
        let mut dist = vec![0.0; self.n_classes];
        for (tree, &w) in self.trees.iter().zip(&self.tree_weights) {
            match self.kind {
                EnsembleKind::Bagging => {
                    for (d, p) in dist.iter_mut().zip(tree.leaf_dist(x)) {
                        *d += w * p;
                    }
                }
                EnsembleKind::Adaboost => dist[tree.predict(x)] += w,
            }
        }
        let total: f64 = dist.iter().sum();
        if total > 0.0 {
            dist.iter_mut().for_each(|d| *d /= total);
        }
        (argmax(&dist), dist)
    }
}

pub fn ensemble_predict(model: &TreeEnsemble, x: &SparseVector) -> (usize, Vec<f64>) {
    model.predict(x)
}

struct Grower<'a> {
    x: &'a [SparseVector],
    y: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    /// Features tried per split; `None` tries every feature present.
    mtry: Option<usize>,
    nodes: Vec<Node>,
}

fn class_dist(samples: &[(usize, f64)], y: &[usize], k: usize) -> Vec<f64> {
    let mut d = vec![0.0; k];
    for &(i, w) in samples {
        d[y[i]] += w;
    }
    d
}

/// `Σ_k d_k² / W`; larger is purer. Weighted Gini of a child is `W − this`.
fn purity(d: &[f64]) -> f64 {
    let w: f64 = d.iter().sum();
    if w <= 0.0 {
        0.0
    } else {
        d.iter().map(|v| v * v).sum::<f64>() / w
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn grow(&mut self, samples: Vec<(usize, f64)>, depth: usize, rng: &mut Prng) -> usize {
        let dist = class_dist(&samples, self.y, self.n_classes);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: normalized(&dist) });
        let impure = dist.iter().filter(|&&d| d > 0.0).count() > 1;
        if depth >= self.max_depth || samples.len() < 2 || !impure {
            return id;
        }
        let Some(best) = self.best_split(&samples, &dist, rng) else {
            return id;
        };
        let (l, r): (Vec<_>, Vec<_>) = samples
            .into_iter()
            .partition(|&(i, _)| self.x[i].get(best.feature) <= best.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, samples: &[(usize, f64)], total: &[f64], rng: &mut Prng) -> Option<Candidate> {
        let mut by_feature: HashMap<usize, Vec<(f64, usize, f64)>> = HashMap::new();
        for &(i, w) in samples {
            for &(f, v) in self.x[i].entries() {
                by_feature.entry(f).or_default().push((v, self.y[i], w));
            }
        }
        let mut features: Vec<usize> = by_feature.keys().copied().collect();
        features.sort_unstable();
        if let Some(m) = self.mtry {
            if m < features.len() {
                let mut pick = rng.sample_distinct(features.len(), m);
                pick.sort_unstable();
                features = pick.into_iter().map(|p| features[p]).collect();
            }
        }

        let mut best: Option<Candidate> = None;
        for f in features {
            let mut entries = by_feature.remove(&f).unwrap_or_default();
            if let Some(c) = self.best_threshold(f, &mut entries, total) {
                if best.as_ref().is_none_or(|b| c.score > b.score + 1e-12) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Sweep the sorted values of one feature; samples lacking it sit at 0.
    fn best_threshold(&self, feature: usize, entries: &mut Vec<(f64, usize, f64)>, total: &[f64]) -> Option<Candidate> {
        let k = self.n_classes;
        let mut zero = total.to_vec();
        for &(_, c, w) in entries.iter() {
            zero[c] -= w;
        }
        let zero_weight: f64 = zero.iter().sum();
        // Collapse round-off so an all-present feature has an empty zero group.
        if zero_weight > 1e-12 {
            entries.push((0.0, usize::MAX, 0.0));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = vec![0.0; k];
        let mut best: Option<Candidate> = None;
        let mut i = 0;
        while i < entries.len() {
            let v = entries[i].0;
            while i < entries.len() && entries[i].0 == v {
                let (_, c, w) = entries[i];
                if c == usize::MAX {
                    left.iter_mut().zip(&zero).for_each(|(l, z)| *l += z.max(0.0));
                } else {
                    left[c] += w;
                }
                i += 1;
            }
            if i == entries.len() {
                break;
            }
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| (t - l).max(0.0)).collect();
            if left.iter().sum::<f64>() <= 0.0 || right.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let score = purity(&left) + purity(&right);
            if best.as_ref().is_none_or(|b| score > b.score + 1e-12) {
                best = Some(Candidate {
                    feature,
                    threshold: 0.5 * (v + entries[i].0),
                    score,
                });
            }
        }
        best
    }
}

fn normalized(d: &[f64]) -> Vec<f64> {
    let w: f64 = d.iter().sum();
    if w > 0.0 {
        d.iter().map(|v| v / w).collect()
    } else {
        vec![1.0 / d.len() as f64; d.len()]
    }
}

/// Grow one Gini tree on weighted samples; zero-weight samples are ignored.
pub fn fit_tree(x: &[SparseVector], y: &[usize], weights: &[f64], n_classes: usize, max_depth: usize, mtry: Option<usize>, rng: &mut Prng) -> DecisionTree {
    let samples: Vec<(usize, f64)> = weights.iter().copied().enumerate().filter(|&(_, w)| w > 0.0).collect();
    let mut g = Grower {
        x,
        y,
        n_classes,
        max_depth,
        mtry,
        nodes: Vec::new(),
    };
    g.grow(samples, 0, rng);
    DecisionTree { nodes: g.nodes }
}

fn check_inputs(x: &[SparseVector], y: &[usize], n_classes: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    if n_classes < 2 {
        return Err(Error::Invalid("tree ensembles need at least two classes".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; unset means `⌈√M⌉`.
    pub feature_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 24,
            feature_subsample: None,
            seed: 42,
        }
    }
}

/// Bagged Gini trees, one bootstrap sample and one derived stream per tree.
pub fn rf_fit(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize, config: &ForestConfig) -> Result<TreeEnsemble> {
    check_inputs(x, y, n_classes)?;
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(Error::Config("n_trees and max_depth must be positive".into()));
    }
    let mtry = config
        .feature_subsample
        .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
        .max(1);
    let n = x.len();
    let trees: Vec<DecisionTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = Prng::derive(config.seed, t as u64);
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[rng.below(n)] += 1.0;
            }
            fit_tree(x, y, &counts, n_classes, config.max_depth, Some(mtry), &mut rng)
        })
        .collect();
    TreeEnsemble::new(EnsembleKind::Bagging, n_classes, trees, vec![1.0; config.n_trees])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub base_depth: usize,
    /// Weighted bootstrap re-draws allowed when a round is no better than chance.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            base_depth: 3,
            max_retries: 5,
            seed: 42,
        }
    }
}

/// Lower bound applied to a round's weighted error before taking logs.
pub const ERROR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrace {
    pub error: f64,
    pub alpha: f64,
    pub retries: usize,
    /// Normalized example weights after this round's update.
    pub weights: Vec<f64>,
}

pub fn adaboost_fit(x: &[SparseVector], y: &[usize], n_classes: usize, config: &BoostConfig) -> Result<TreeEnsemble> {
    adaboost_fit_traced(x, y, n_classes, config).map(|(m, _)| m)
}

/// SAMME with `α_r = ln((1 − err)/err) + ln(K − 1)`.
pub fn adaboost_fit_traced(x: &[SparseVector], y: &[usize], n_classes: usize, config: &BoostConfig) -> Result<(TreeEnsemble, Vec<RoundTrace>)> {
    check_inputs(x, y, n_classes)?;
    if config.n_rounds == 0 || config.base_depth == 0 {
        return Err(Error::Config("n_rounds and base_depth must be positive".into()));
    }
    let n = x.len();
    let chance = 1.0 - 1.0 / n_classes as f64;
    let mut w = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    let mut trace = Vec::new();

    for round in 0..config.n_rounds {
        let mut rng = Prng::derive(config.seed, round as u64);
        let mut tree = fit_tree(x, y, &w, n_classes, config.base_depth, None, &mut rng);
        let mut missed: Vec<bool> = x.iter().zip(y).map(|(xi, &yi)| tree.predict(xi) != yi).collect();
        let mut err = weighted_error(&w, &missed);
        let mut retries = 0;
        while err >= chance && retries < config.max_retries {
            retries += 1;
            let resample = weighted_bootstrap(&w, &mut rng);
            tree = fit_tree(x, y, &resample, n_classes, config.base_depth, None, &mut rng);
            missed = x.iter().zip(y).map(|(xi, &yi)| tree.predict(xi) != yi).collect();
            err = weighted_error(&w, &missed);
        }
        if err >= chance {
            if round == 0 {
                return Err(Error::Invalid(format!(
                    "first weak learner no better than chance (weighted error {err:.4} ≥ {chance:.4}) after {retries} re-draws"
                )));
            }
            log::warn!("boosting stopped at round {round}: weighted error {err:.4} not better than chance");
            break;
        }
        let floored = err.max(ERROR_FLOOR);
        let alpha = ((1.0 - floored) / floored).ln() + ((n_classes - 1) as f64).ln();
        for (wi, &m) in w.iter_mut().zip(&missed) {
            if m {
                *wi *= alpha.exp();
            }
        }
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= z);
        trees.push(tree);
        alphas.push(alpha);
        trace.push(RoundTrace {
            error: err,
            alpha,
            retries,
            weights: w.clone(),
        });
        if err == 0.0 {
            break;
        }
    }
    Ok((TreeEnsemble::new(EnsembleKind::Adaboost, n_classes, trees, alphas)?, trace))
}

fn weighted_error(w: &[f64], missed: &[bool]) -> f64 {
    let total: f64 = w.iter().sum();
    w.iter().zip(missed).filter(|(_, &m)| m).map(|(wi, _)| wi).sum::<f64>() / total
}

/// Draw `n` indices with probability proportional to `w`; return counts.
fn weighted_bootstrap(w: &[f64], rng: &mut Prng) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for wi in w {
        acc += wi;
        cdf.push(acc);
    }
    let mut counts = vec![0.0; w.len()];
    for _ in 0..w.len() {
        let u = rng.next_f64() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(w.len() - 1);
        counts[i] += 1.0;
    }
    counts
}
