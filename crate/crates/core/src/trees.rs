//! Gradient-boosted softmax classifier over flat feature vectors.
//!
//! Each boosting round grows one regression tree per class on the
//! second-order expansion of the cross-entropy loss. Splits are chosen by
//! exact greedy search over observed feature values; a sample goes left when
//! `x[feature] < threshold`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::TreeConfig;
use crate::error::TreeError;
use crate::observation::{ActionClass, FeatureSpec};

pub const N_CLASSES: usize = 3;
pub const MODEL_FORMAT: &str = "cfdriver-trees";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledObs {
    pub features: Vec<f64>,
    pub label: ActionClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Regression tree stored as a flat node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NodeRecord", try_from = "NodeRecord")]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Nested form used on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeRecord {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<NodeRecord>, right: Box<NodeRecord> },
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf(value)] }
    }

    pub fn split(feature: usize, threshold: f64, left: Tree, right: Tree) -> Self {
        let mut nodes = Vec::with_capacity(1 + left.nodes.len() + right.nodes.len());
        nodes.push(Node::Leaf(0.0));
        let l = append(&mut nodes, &left.nodes);
        let r = append(&mut nodes, &right.nodes);
        nodes[0] = Node::Split { feature, threshold, left: l, right: r };
        Tree { nodes }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// `(feature, threshold)` of every internal node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf(v) = n {
                *v *= factor;
            }
        }
    }

    fn validate(&self, n_features: usize) -> Result<(), TreeError> {
        for n in &self.nodes {
            match *n {
                Node::Leaf(v) if !v.is_finite() => return Err(TreeError::Malformed("non-finite leaf value".into())),
                Node::Split { feature, .. } if feature >= n_features => {
                    return Err(TreeError::Malformed(format!("split on feature {feature} of {n_features}")))
                }
                Node::Split { threshold, .. } if !threshold.is_finite() => {
                    return Err(TreeError::Malformed("non-finite threshold".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn append(nodes: &mut Vec<Node>, sub: &[Node]) -> usize {
    let offset = nodes.len();
    nodes.extend(sub.iter().map(|n| match *n {
        Node::Split { feature, threshold, left, right } => {
            Node::Split { feature, threshold, left: left + offset, right: right + offset }
        }
        leaf => leaf,
    }));
    offset
}

impl From<Tree> for NodeRecord {
    fn from(t: Tree) -> Self {
        fn go(nodes: &[Node], i: usize) -> NodeRecord {
            match nodes[i] {
                Node::Leaf(value) => NodeRecord::Leaf { value },
                Node::Split { feature, threshold, left, right } => NodeRecord::Split {
                    feature,
                    threshold,
                    left: Box::new(go(nodes, left)),
                    right: Box::new(go(nodes, right)),
                },
            }
        }
        go(&t.nodes, 0)
    }
}

impl TryFrom<NodeRecord> for Tree {
    type Error = String;

    fn try_from(r: NodeRecord) -> Result<Self, String> {
        Ok(match r {
            NodeRecord::Leaf { value } => Tree::leaf(value),
            NodeRecord::Split { feature, threshold, left, right } => {
                Tree::split(feature, threshold, Tree::try_from(*left)?, Tree::try_from(*right)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeHyper {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub l2: f64,
}

impl From<&TreeConfig> for TreeHyper {
    fn from(c: &TreeConfig) -> Self {
        TreeHyper {
            rounds: c.rounds,
            max_depth: c.max_depth,
            learning_rate: c.learning_rate,
            min_leaf: c.min_leaf,
            l2: c.l2,
        }
    }
}

impl Default for TreeHyper {
    fn default() -> Self {
        (&TreeConfig::default()).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeModel {
    pub format: String,
    pub version: u32,
    pub hyper: TreeHyper,
    pub n_features: usize,
    #[serde(default)]
    pub schema: Vec<FeatureSpec>,
    /// Initial per-class scores (log class priors).
    pub base_scores: Vec<f64>,
    /// One tree per class for every round.
    pub rounds: Vec<Vec<Tree>>,
    /// Mean training cross-entropy before the first round and after each.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

impl TreeModel {
    /// Builds a model from explicit trees, mainly for fixtures.
    pub fn from_trees(n_features: usize, base_scores: [f64; N_CLASSES], rounds: Vec<[Tree; N_CLASSES]>) -> Self {
        TreeModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            hyper: TreeHyper { rounds: rounds.len(), ..TreeHyper::default() },
            n_features,
            schema: Vec::new(),
            base_scores: base_scores.to_vec(),
            rounds: rounds.into_iter().map(Vec::from).collect(),
            train_loss: Vec::new(),
        }
    }

    fn check(&self, x: &[f64]) -> Result<(), TreeError> {
        if self.base_scores.len() != N_CLASSES {
            return Err(TreeError::UnfittedModel);
        }
        if x.len() != self.n_features {
            return Err(TreeError::FeatureLength { expected: self.n_features, got: x.len() });
        }
        Ok(())
    }

    fn scores_unchecked(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut s = [self.base_scores[0], self.base_scores[1], self.base_scores[2]];
        for round in &self.rounds {
            for (k, t) in round.iter().enumerate() {
                s[k] += t.eval(x);
            }
        }
        s
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; N_CLASSES], TreeError> {
        self.check(x)?;
        Ok(self.scores_unchecked(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; N_CLASSES], TreeError> {
        Ok(softmax(self.scores(x)?))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<ActionClass, TreeError> {
        Ok(argmax_class(&self.predict_proba(x)?))
    }

    /// Features that appear in at least one split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.rounds.iter().flatten().flat_map(|t| t.splits().map(|(f, _)| f)).collect()
    }

    /// Sorted distinct thresholds the model uses on `feature`.
    pub fn thresholds(&self, feature: usize) -> Vec<f64> {
        let mut v: Vec<f64> =
            self.rounds.iter().flatten().flat_map(|t| t.splits()).filter(|&(f, _)| f == feature).map(|(_, t)| t).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.format != MODEL_FORMAT {
            return Err(TreeError::Malformed(format!("unexpected format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(TreeError::Malformed(format!("unsupported version {}", self.version)));
        }
        if self.base_scores.len() != N_CLASSES || self.base_scores.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::Malformed("base scores must be 3 finite values".into()));
        }
        if !self.schema.is_empty() && self.schema.len() != self.n_features {
            return Err(TreeError::Malformed("schema length differs from feature count".into()));
        }
        for round in &self.rounds {
            if round.len() != N_CLASSES {
                return Err(TreeError::Malformed("each round needs one tree per class".into()));
            }
            for t in round {
                t.validate(self.n_features)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let m: TreeModel = serde_json::from_str(text).map_err(|e| TreeError::Malformed(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

pub fn softmax(s: [f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = s.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

/// Index of the largest entry; ties go to the lower class index.
pub fn argmax_class(p: &[f64; N_CLASSES]) -> ActionClass {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    ActionClass::from_index(best).expect("class index in range")
}

fn cross_entropy(scores: &[[f64; N_CLASSES]], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - s[y]
        })
        .sum();
    total / scores.len() as f64
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

/// Split gain as used by the greedy search (without the conventional 1/2).
pub fn split_gain(left: (f64, f64), right: (f64, f64), l2: f64) -> f64 {
    score(left.0, left.1, l2) + score(right.0, right.1, l2) - score(left.0 + right.0, left.1 + right.1, l2)
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    order: &'a [Vec<usize>],
    hyper: &'a TreeHyper,
}

/// Feature, threshold, left child and right child of a working node.
type NodeSplit = (usize, f64, usize, usize);

impl Grower<'_> {
    /// Grows one tree level by level on gradients `g` and hessians `h`.
    fn grow(&self, g: &[f64], h: &[f64]) -> Tree {
        let n = g.len();
        // Working nodes: None while still a leaf candidate, Some(split) once split.
        let mut nodes: Vec<(Stats, Option<NodeSplit>)> = Vec::new();
        let mut root = Stats::default();
        for i in 0..n {
            root.g += g[i];
            root.h += h[i];
            root.n += 1;
        }
        nodes.push((root, None));
        let mut node_of = vec![0usize; n];
        let mut frontier = vec![0usize];
        let n_features = self.order.len();

        for _depth in 0..self.hyper.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot = vec![usize::MAX; nodes.len()];
            for (k, &id) in frontier.iter().enumerate() {
                slot[id] = k;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
            for f in 0..n_features {
                let mut acc = vec![Stats::default(); frontier.len()];
                let mut last: Vec<Option<f64>> = vec![None; frontier.len()];
                for &i in &self.order[f] {
                    let k = slot[node_of[i]];
                    if k == usize::MAX {
                        continue;
                    }
                    let v = self.x[i][f];
                    if let Some(prev) = last[k] {
                        if v > prev {
                            let parent = nodes[frontier[k]].0;
                            let left = acc[k];
                            let right_n = parent.n - left.n;
                            if left.n >= self.hyper.min_leaf && right_n >= self.hyper.min_leaf {
                                let gain = split_gain((left.g, left.h), (parent.g - left.g, parent.h - left.h), self.hyper.l2);
                                if gain > 0.0 && best[k].is_none_or(|b| gain > b.gain) {
                                    best[k] = Some(Candidate { gain, feature: f, threshold: v });
                                }
                            }
                        }
                    }
                    last[k] = Some(v);
                    acc[k].g += g[i];
                    acc[k].h += h[i];
                    acc[k].n += 1;
                }
            }

            let mut next_frontier = Vec::new();
            let mut child_of = vec![None; frontier.len()];
            for (k, &id) in frontier.iter().enumerate() {
                if let Some(c) = best[k] {
                    let l = nodes.len();
                    nodes.push((Stats::default(), None));
                    nodes.push((Stats::default(), None));
                    nodes[id].1 = Some((c.feature, c.threshold, l, l + 1));
                    child_of[k] = Some((c.feature, c.threshold, l));
                    next_frontier.push(l);
                    next_frontier.push(l + 1);
                }
            }
            for i in 0..n {
                let k = slot[node_of[i]];
                if k == usize::MAX {
                    continue;
                }
                if let Some((f, thr, l)) = child_of[k] {
                    let child = if self.x[i][f] < thr { l } else { l + 1 };
                    node_of[i] = child;
                    let s = &mut nodes[child].0;
                    s.g += g[i];
                    s.h += h[i];
                    s.n += 1;
                }
            }
            frontier = next_frontier;
        }

        let lr = self.hyper.learning_rate;
        let l2 = self.hyper.l2;
        Tree {
            nodes: nodes
                .iter()
                .map(|(s, split)| match *split {
                    Some((feature, threshold, left, right)) => Node::Split { feature, threshold, left, right },
                    None => Node::Leaf(-s.g / (s.h + l2) * lr),
                })
                .collect(),
        }
    }
}

/// Fits a boosted classifier. Rounds whose full step would raise the
/// training loss are shrunk by halving until it does not.
pub fn fit(data: &[LabeledObs], hyper: &TreeHyper, schema: Vec<FeatureSpec>) -> Result<TreeModel, TreeError> {
    let first = data.first().ok_or(TreeError::EmptyDataset)?;
    let d = first.features.len();
    if let Some(bad) = data.iter().find(|r| r.features.len() != d) {
        return Err(TreeError::FeatureLength { expected: d, got: bad.features.len() });
    }
    let n = data.len();
    let x: Vec<Vec<f64>> = data.iter().map(|r| r.features.clone()).collect();
    let labels: Vec<usize> = data.iter().map(|r| r.label.index()).collect();

    let mut counts = [0usize; N_CLASSES];
    for &y in &labels {
        counts[y] += 1;
    }
    let base: Vec<f64> = counts.iter().map(|&c| ((c as f64 + 1.0) / (n as f64 + N_CLASSES as f64)).ln()).collect();

    let order: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let grower = Grower { x: &x, order: &order, hyper };

    let mut scores: Vec<[f64; N_CLASSES]> = vec![[base[0], base[1], base[2]]; n];
    let mut loss = cross_entropy(&scores, &labels);
    let mut history = vec![loss];
    let mut rounds = Vec::with_capacity(hyper.rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];

    for _ in 0..hyper.rounds {
        let probs: Vec<[f64; N_CLASSES]> = scores.iter().map(|s| softmax(*s)).collect();
        let mut trees = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            for i in 0..n {
                let p = probs[i][k];
                g[i] = p - if labels[i] == k { 1.0 } else { 0.0 };
                h[i] = (p * (1.0 - p)).max(1e-16);
            }
            trees.push(grower.grow(&g, &h));
        }
        let deltas: Vec<[f64; N_CLASSES]> =
            x.iter().map(|xi| [trees[0].eval(xi), trees[1].eval(xi), trees[2].eval(xi)]).collect();

        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<[f64; N_CLASSES]> = scores
                .iter()
                .zip(&deltas)
                .map(|(s, dl)| [s[0] + factor * dl[0], s[1] + factor * dl[1], s[2] + factor * dl[2]])
                .collect();
            let l = cross_entropy(&trial, &labels);
            if l <= loss {
                accepted = Some((trial, l));
                break;
            }
            factor *= 0.5;
        }
        let Some((trial, l)) = accepted else {
            break;
        };
        if factor != 1.0 {
            for t in &mut trees {
                t.scale_leaves(factor);
            }
        }
        scores = trial;
        loss = l;
        history.push(loss);
        rounds.push(trees);
    }

    Ok(TreeModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        hyper: hyper.clone(),
        n_features: d,
        schema,
        base_scores: base,
        rounds,
        train_loss: history,
    })
}

/// Fraction of records whose predicted class matches the label.
pub fn accuracy(model: &TreeModel, data: &[LabeledObs]) -> Result<f64, TreeError> {
    if data.is_empty() {
        return Ok(1.0);
    }
    let mut hits = 0;
    for r in data {
        if model.predict_class(&r.features)? == r.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
