//! Decision-tree surrogate: top-down induction with the gain-ratio
//! criterion, multiway categorical splits and binary threshold splits on
//! continuous features, plus root-to-leaf path extraction.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::data::{FeatureKind, FeatureSchema, Instance, Label};
use crate::rules::{Interval, Premise, SplitCondition};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("cannot build a tree from an empty training set")]
    EmptyTrainingSet,
    #[error("training set has {instances} instances but {labels} labels")]
    LengthMismatch { instances: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Minimum number of instances on each side of a split.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features sampled per node; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            max_depth: None,
            max_features: None,
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        label: Label,
        counts: [usize; 2],
    },
    Categorical {
        feature: usize,
        /// `(category, child)` in ascending category order.
        branches: Vec<(usize, NodeId)>,
        /// Child used for categories with no branch.
        fallback: NodeId,
        counts: [usize; 2],
    },
    Threshold {
        feature: usize,
        threshold: f64,
        le: NodeId,
        gt: NodeId,
        counts: [usize; 2],
    },
}

impl Node {
    pub fn counts(&self) -> [usize; 2] {
        match self {
            Node::Leaf { counts, .. } | Node::Categorical { counts, .. } | Node::Threshold { counts, .. } => *counts,
        }
    }

    pub fn support(&self) -> usize {
        let c = self.counts();
        c[0] + c[1]
    }
}

/// Nested description of a tree, used to build trees by hand.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSpec {
    Leaf(Label),
    Threshold {
        feature: usize,
        threshold: f64,
        le: Box<NodeSpec>,
        gt: Box<NodeSpec>,
    },
    Categorical {
        feature: usize,
        branches: Vec<(usize, NodeSpec)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Edge into each node: `(parent, condition)`; `None` for the root.
    parents: Vec<Option<(NodeId, SplitCondition)>>,
}

const ROOT: NodeId = 0;

fn entropy(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn majority(counts: [usize; 2]) -> Label {
    if counts[1] > counts[0] {
        1
    } else {
        0
    }
}

/// Information gain and split information of partitioning `parent` into
/// `parts`.
pub fn gain_and_split_info(parent: [usize; 2], parts: &[[usize; 2]]) -> (f64, f64) {
    let n = (parent[0] + parent[1]) as f64;
    let mut remainder = 0.0;
    let mut split_info = 0.0;
    for part in parts {
        let size = (part[0] + part[1]) as f64;
        if size == 0.0 {
            continue;
        }
        let w = size / n;
        remainder += w * entropy(*part);
        split_info -= w * w.log2();
    }
    (entropy(parent) - remainder, split_info)
}

/// Gain ratio of a partition; `0` when the split information vanishes.
pub fn gain_ratio(parent: [usize; 2], parts: &[[usize; 2]]) -> f64 {
    let (gain, split_info) = gain_and_split_info(parent, parts);
    if split_info <= 1e-12 {
        0.0
    } else {
        gain / split_info
    }
}

#[derive(Debug, Clone)]
enum SplitChoice {
    Categorical { feature: usize },
    Threshold { feature: usize, threshold: f64 },
}

#[derive(Debug, Clone)]
struct Candidate {
    choice: SplitChoice,
    gain: f64,
    ratio: f64,
}

struct Builder<'a, R> {
    schema: &'a FeatureSchema,
    xs: &'a [Instance],
    ys: &'a [Label],
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    parents: Vec<Option<(NodeId, SplitCondition)>>,
}

const MIN_GAIN: f64 = 1e-12;

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0usize; 2];
        for &i in idx {
            c[self.ys[i]] += 1;
        }
        c
    }

    fn push(&mut self, node: Node, parent: Option<(NodeId, SplitCondition)>) -> NodeId {
        self.nodes.push(node);
        self.parents.push(parent);
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, consumed: &mut Vec<bool>, parent: Option<(NodeId, SplitCondition)>) -> NodeId {
        let counts = self.counts(&idx);
        let leaf = Node::Leaf {
            label: majority(counts),
            counts,
        };
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * self.params.min_leaf.max(1) {
            return self.push(leaf, parent);
        }
        let Some(best) = self.best_split(&idx, counts, consumed) else {
            return self.push(leaf, parent);
        };

        // reserve the slot so children get larger ids (pre-order layout)
        let id = self.push(leaf, parent);
        match best.choice {
            SplitChoice::Categorical { feature } => {
                let n_values = match &self.schema.features[feature].kind {
                    FeatureKind::Categorical { values } => values.len(),
                    FeatureKind::Continuous { .. } => unreachable!(),
                };
                let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_values];
                for &i in &idx {
                    groups[self.xs[i].get(feature).as_category()].push(i);
                }
                consumed[feature] = true;
                let mut branches = Vec::new();
                let mut fallback = (0usize, NodeId::MAX);
                for (category, group) in groups.into_iter().enumerate() {
                    if group.is_empty() {
                        continue;
                    }
                    let size = group.len();
                    let edge = SplitCondition::equals(feature, category);
                    let child = self.grow(group, depth + 1, consumed, Some((id, edge)));
                    if size > fallback.0 {
                        fallback = (size, child);
                    }
                    branches.push((category, child));
                }
                consumed[feature] = false;
                self.nodes[id] = Node::Categorical {
                    feature,
                    branches,
                    fallback: fallback.1,
                    counts,
                };
            }
            SplitChoice::Threshold { feature, threshold } => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.xs[i].get(feature).as_number() <= threshold);
                let le = self.grow(
                    left,
                    depth + 1,
                    consumed,
                    Some((id, SplitCondition::interval(feature, Interval::at_most(threshold)))),
                );
                let gt = self.grow(
                    right,
                    depth + 1,
                    consumed,
                    Some((id, SplitCondition::interval(feature, Interval::greater_than(threshold)))),
                );
                self.nodes[id] = Node::Threshold {
                    feature,
                    threshold,
                    le,
                    gt,
                    counts,
                };
            }
        }
        id
    }

    fn best_split(&mut self, idx: &[usize], counts: [usize; 2], consumed: &[bool]) -> Option<Candidate> {
        let mut available: Vec<usize> = (0..self.schema.len()).filter(|&f| !consumed[f]).collect();
        if let (Some(k), Some(rng)) = (self.params.max_features, self.rng.as_deref_mut()) {
            if k < available.len() {
                let mut picked: Vec<usize> = sample(rng, available.len(), k).into_iter().map(|i| available[i]).collect();
                picked.sort_unstable();
                available = picked;
            }
        }

        let candidates: Vec<Candidate> = available
            .into_iter()
            .filter_map(|f| match self.schema.features[f].kind {
                FeatureKind::Categorical { .. } => self.categorical_candidate(f, idx, counts),
                FeatureKind::Continuous { .. } => self.threshold_candidate(f, idx, counts),
            })
            .filter(|c| c.gain > MIN_GAIN)
            .collect();
        if candidates.is_empty() {
            return None;
        }
        // only splits with at least average gain compete on gain ratio
        let avg_gain = candidates.iter().map(|c| c.gain).sum::<f64>() / candidates.len() as f64;
        let mut best: Option<Candidate> = None;
        for c in candidates {
            if c.gain + 1e-12 < avg_gain {
                continue;
            }
            if best.as_ref().is_none_or(|b| c.ratio > b.ratio + 1e-12) {
                best = Some(c);
            }
        }
        best
    }

    fn categorical_candidate(&self, feature: usize, idx: &[usize], counts: [usize; 2]) -> Option<Candidate> {
        let n_values = match &self.schema.features[feature].kind {
            FeatureKind::Categorical { values } => values.len(),
            FeatureKind::Continuous { .. } => unreachable!(),
        };
        let mut parts = vec![[0usize; 2]; n_values];
        for &i in idx {
            parts[self.xs[i].get(feature).as_category()][self.ys[i]] += 1;
        }
        let parts: Vec<[usize; 2]> = parts.into_iter().filter(|p| p[0] + p[1] > 0).collect();
        let big_enough = parts.iter().filter(|p| p[0] + p[1] >= self.params.min_leaf).count();
        if parts.len() < 2 || big_enough < 2 {
            return None;
        }
        let (gain, split_info) = gain_and_split_info(counts, &parts);
        Some(Candidate {
            choice: SplitChoice::Categorical { feature },
            gain,
            ratio: if split_info <= 1e-12 { 0.0 } else { gain / split_info },
        })
    }

    fn threshold_candidate(&self, feature: usize, idx: &[usize], counts: [usize; 2]) -> Option<Candidate> {
        let mut pairs: Vec<(f64, Label)> = idx.iter().map(|&i| (self.xs[i].get(feature).as_number(), self.ys[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // class profile of each distinct value
        let mut groups: Vec<(f64, [usize; 2])> = Vec::new();
        for (v, y) in pairs {
            match groups.last_mut() {
                Some((last, c)) if *last == v => c[y] += 1,
                _ => {
                    let mut c = [0usize; 2];
                    c[y] += 1;
                    groups.push((v, c));
                }
            }
        }
        if groups.len() < 2 {
            return None;
        }

        let n = idx.len();
        let mut left = [0usize; 2];
        let mut best: Option<(f64, f64, [usize; 2])> = None; // (gain, threshold, left)
        for w in 0..groups.len() - 1 {
            let (v, c) = groups[w];
            left[0] += c[0];
            left[1] += c[1];
            let (next_v, next_c) = groups[w + 1];
            let pure_same = |a: [usize; 2], b: [usize; 2]| {
                (a[0] == 0 && b[0] == 0) || (a[1] == 0 && b[1] == 0)
            };
            if pure_same(c, next_c) {
                continue;
            }
            let left_n = left[0] + left[1];
            if left_n < self.params.min_leaf || n - left_n < self.params.min_leaf {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let (gain, _) = gain_and_split_info(counts, &[left, right]);
            if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                let mut threshold = v + (next_v - v) / 2.0;
                if threshold >= next_v {
                    threshold = v;
                }
                best = Some((gain, threshold, left));
            }
        }
        let (gain, threshold, left) = best?;
        let right = [counts[0] - left[0], counts[1] - left[1]];
        let (_, split_info) = gain_and_split_info(counts, &[left, right]);
        Some(Candidate {
            choice: SplitChoice::Threshold { feature, threshold },
            gain,
            ratio: if split_info <= 1e-12 { 0.0 } else { gain / split_info },
        })
    }
}

impl DecisionTree {
    /// Induces a tree on `(xs, ys)`. `max_features` in `params` is ignored
    /// here; use [`DecisionTree::fit_with_rng`] for per-node subsampling.
    pub fn fit(schema: &FeatureSchema, xs: &[Instance], ys: &[Label], params: TreeParams) -> Result<Self, TreeError> {
        Self::fit_inner::<rand_chacha::ChaCha8Rng>(schema, xs, ys, params, None)
    }

    pub fn fit_with_rng<R: Rng>(
        schema: &FeatureSchema,
        xs: &[Instance],
        ys: &[Label],
        params: TreeParams,
        rng: &mut R,
    ) -> Result<Self, TreeError> {
        Self::fit_inner(schema, xs, ys, params, Some(rng))
    }

    fn fit_inner<R: Rng>(
        schema: &FeatureSchema,
        xs: &[Instance],
        ys: &[Label],
        params: TreeParams,
        rng: Option<&mut R>,
    ) -> Result<Self, TreeError> {
        if xs.len() != ys.len() {
            return Err(TreeError::LengthMismatch {
                instances: xs.len(),
                labels: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(TreeError::EmptyTrainingSet);
        }
        let mut builder = Builder {
            schema,
            xs,
            ys,
            params,
            rng,
            nodes: Vec::new(),
            parents: Vec::new(),
        };
        let mut consumed = vec![false; schema.len()];
        builder.grow((0..xs.len()).collect(), 0, &mut consumed, None);
        Ok(DecisionTree {
            nodes: builder.nodes,
            parents: builder.parents,
        })
    }

    /// Builds a tree from a hand-written shape. Support counts are zero
    /// and a categorical node falls back to its first branch.
    pub fn from_spec(spec: &NodeSpec) -> Self {
        fn add(tree: &mut DecisionTree, spec: &NodeSpec, parent: Option<(NodeId, SplitCondition)>) -> NodeId {
            let id = tree.nodes.len();
            tree.nodes.push(Node::Leaf { label: 0, counts: [0, 0] });
            tree.parents.push(parent);
            let node = match spec {
                NodeSpec::Leaf(label) => Node::Leaf {
                    label: *label,
                    counts: [0, 0],
                },
                NodeSpec::Threshold {
                    feature,
                    threshold,
                    le,
                    gt,
                } => {
                    let le = add(tree, le, Some((id, SplitCondition::interval(*feature, Interval::at_most(*threshold)))));
                    let gt = add(tree, gt, Some((id, SplitCondition::interval(*feature, Interval::greater_than(*threshold)))));
                    Node::Threshold {
                        feature: *feature,
                        threshold: *threshold,
                        le,
                        gt,
                        counts: [0, 0],
                    }
                }
                NodeSpec::Categorical { feature, branches } => {
                    assert!(!branches.is_empty(), "categorical node without branches");
                    let mut sorted: Vec<&(usize, NodeSpec)> = branches.iter().collect();
                    sorted.sort_by_key(|(c, _)| *c);
                    let branches: Vec<(usize, NodeId)> = sorted
                        .into_iter()
                        .map(|(c, child)| (*c, add(tree, child, Some((id, SplitCondition::equals(*feature, *c))))))
                        .collect();
                    Node::Categorical {
                        feature: *feature,
                        fallback: branches[0].1,
                        branches,
                        counts: [0, 0],
                    }
                }
            };
            tree.nodes[id] = node;
            id
        }
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            parents: Vec::new(),
        };
        add(&mut tree, spec, None);
        tree
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Leaf reached by `x`.
    pub fn leaf_of(&self, x: &Instance) -> NodeId {
        let mut id = ROOT;
        loop {
            id = match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Threshold {
                    feature,
                    threshold,
                    le,
                    gt,
                    ..
                } => {
                    if x.get(*feature).as_number() <= *threshold {
                        *le
                    } else {
                        *gt
                    }
                }
                Node::Categorical {
                    feature,
                    branches,
                    fallback,
                    ..
                } => {
                    let c = x.get(*feature).as_category();
                    branches.iter().find(|(v, _)| *v == c).map_or(*fallback, |(_, child)| *child)
                }
            };
        }
    }

    /// `true` when `x` reaches its leaf only through a fallback branch
    /// (an unseen category at some categorical node).
    pub fn routes_through_fallback(&self, x: &Instance) -> bool {
        let mut id = ROOT;
        loop {
            id = match &self.nodes[id] {
                Node::Leaf { .. } => return false,
                Node::Threshold {
                    feature,
                    threshold,
                    le,
                    gt,
                    ..
                } => {
                    if x.get(*feature).as_number() <= *threshold {
                        *le
                    } else {
                        *gt
                    }
                }
                Node::Categorical { feature, branches, .. } => {
                    let c = x.get(*feature).as_category();
                    match branches.iter().find(|(v, _)| *v == c) {
                        Some((_, child)) => *child,
                        None => return true,
                    }
                }
            };
        }
    }

    pub fn predict(&self, x: &Instance) -> Label {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { label, .. } => label,
            _ => unreachable!("leaf_of returns a leaf"),
        }
    }

    pub fn leaf_label(&self, leaf: NodeId) -> Label {
        match self.nodes[leaf] {
            Node::Leaf { label, .. } => label,
            _ => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Conjunction of edge conditions from the root to `leaf`, with
    /// repeated continuous features intersected into one interval.
    pub fn path_premise(&self, leaf: NodeId) -> Premise {
        let mut edges = Vec::new();
        let mut id = leaf;
        while let Some((parent, sc)) = self.parents[id] {
            edges.push(sc);
            id = parent;
        }
        let mut premise = Premise::new();
        for sc in edges.into_iter().rev() {
            premise.constrain(sc);
        }
        premise
    }

    /// Leaves in left-to-right order, optionally restricted to one label.
    pub fn leaves(&self, label_filter: Option<Label>) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { label, .. } => {
                    if label_filter.is_none_or(|l| l == *label) {
                        out.push(id);
                    }
                }
                Node::Threshold { le, gt, .. } => {
                    stack.push(*gt);
                    stack.push(*le);
                }
                Node::Categorical { branches, .. } => {
                    stack.extend(branches.iter().rev().map(|(_, c)| *c));
                }
            }
        }
        out
    }

    /// `(premise, label)` for every leaf, left to right.
    pub fn enumerate_leaves(&self, label_filter: Option<Label>) -> Vec<(Premise, Label)> {
        self.leaves(label_filter)
            .into_iter()
            .map(|leaf| (self.path_premise(leaf), self.leaf_label(leaf)))
            .collect()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for id in 1..self.nodes.len() {
            // parents precede children in the node layout
            let (parent, _) = self.parents[id].expect("non-root node has a parent");
            depth[id] = depth[parent] + 1;
            max = max.max(depth[id]);
        }
        max
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Indented text rendering, one node per line.
    pub fn dump(&self, schema: &FeatureSchema) -> String {
        let mut out = String::new();
        self.dump_node(schema, ROOT, 0, &mut out);
        out
    }

    fn dump_node(&self, schema: &FeatureSchema, id: NodeId, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match &self.nodes[id] {
            Node::Leaf { label, counts } => {
                let _ = writeln!(out, "{pad}-> {} {:?}", schema.label_name(*label), counts);
            }
            Node::Threshold {
                feature, threshold, le, gt, ..
            } => {
                let name = &schema.features[*feature].name;
                let _ = writeln!(out, "{pad}{name} <= {threshold}");
                self.dump_node(schema, *le, indent + 1, out);
                let _ = writeln!(out, "{pad}{name} > {threshold}");
                self.dump_node(schema, *gt, indent + 1, out);
            }
            Node::Categorical { feature, branches, .. } => {
                let spec = &schema.features[*feature];
                for (c, child) in branches {
                    let _ = writeln!(out, "{pad}{} = {}", spec.name, spec.category_name(*c));
                    self.dump_node(schema, *child, indent + 1, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, FeatureValue, Target};
    use crate::rules::satisfies;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_entropy(labels: &[Label]) -> f64 {
        let n = labels.len() as f64;
        let mut h = 0.0;
        for class in 0..2 {
            let k = labels.iter().filter(|&&l| l == class).count() as f64;
            if k > 0.0 {
                h -= (k / n) * (k / n).log2();
            }
        }
        h
    }

    // gain ratio recomputed from scratch on explicit label lists
    fn brute_gain_ratio(parts: &[Vec<Label>]) -> f64 {
        let all: Vec<Label> = parts.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let mut rem = 0.0;
        let mut si = 0.0;
        for p in parts.iter().filter(|p| !p.is_empty()) {
            let w = p.len() as f64 / n;
            rem += w * brute_entropy(p);
            si -= w * w.log2();
        }
        if si <= 1e-12 {
            0.0
        } else {
            (brute_entropy(&all) - rem) / si
        }
    }

    proptest! {
        #[test]
        fn gain_ratio_matches_brute_force(parts in proptest::collection::vec(proptest::collection::vec(0usize..2, 0..8), 1..4)) {
            let total: usize = parts.iter().map(|p| p.len()).sum();
            prop_assume!(total > 0 && total <= 20);
            let counts: Vec<[usize; 2]> = parts
                .iter()
                .map(|p| [p.iter().filter(|&&l| l == 0).count(), p.iter().filter(|&&l| l == 1).count()])
                .collect();
            let parent = counts.iter().fold([0, 0], |a, c| [a[0] + c[0], a[1] + c[1]]);
            let got = gain_ratio(parent, &counts);
            prop_assert!((got - brute_gain_ratio(&parts)).abs() < 1e-9);
        }
    }

    fn one_feature_schema() -> FeatureSchema {
        FeatureSchema {
            features: vec![FeatureSpec {
                name: "v".into(),
                kind: FeatureKind::Continuous { min: 0.0, max: 100.0 },
                empirical: None,
            }],
            target: Target {
                name: "y".into(),
                labels: ["a".into(), "b".into()],
            },
        }
    }

    fn num(v: f64) -> Instance {
        Instance::new(vec![FeatureValue::Number(v)])
    }

    #[test]
    fn pure_set_is_a_single_leaf() {
        let s = one_feature_schema();
        let xs: Vec<Instance> = (0..10).map(|i| num(i as f64)).collect();
        let t = DecisionTree::fit(&s, &xs, &[1; 10], TreeParams::default()).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict(&num(50.0)), 1);
        assert!(t.path_premise(0).is_empty());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let s = one_feature_schema();
        assert_eq!(DecisionTree::fit(&s, &[], &[], TreeParams::default()), Err(TreeError::EmptyTrainingSet));
    }

    #[test]
    fn separable_by_one_threshold() {
        let s = one_feature_schema();
        let values = [3.0, 7.0, 1.0, 12.0, 15.0, 9.0, 20.0, 4.0];
        let xs: Vec<Instance> = values.iter().map(|&v| num(v)).collect();
        let ys: Vec<Label> = values.iter().map(|&v| usize::from(v > 8.0)).collect();
        // brute force: some threshold separates the classes
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let separating = sorted
            .windows(2)
            .map(|w| (w[0] + w[1]) / 2.0)
            .filter(|t| values.iter().zip(&ys).all(|(v, &y)| usize::from(v > t) == y))
            .count();
        assert_eq!(separating, 1);

        let t = DecisionTree::fit(&s, &xs, &ys, TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 1);
        assert!(xs.iter().zip(&ys).all(|(x, &y)| t.predict(x) == y));
        match t.node(0) {
            Node::Threshold { threshold, .. } => assert_eq!(*threshold, 8.0),
            other => panic!("unexpected root {other:?}"),
        }
    }

    #[test]
    fn repeated_continuous_split_merges_into_one_interval() {
        let spec = NodeSpec::Threshold {
            feature: 0,
            threshold: 25.0,
            le: Box::new(NodeSpec::Threshold {
                feature: 0,
                threshold: 17.0,
                le: Box::new(NodeSpec::Leaf(0)),
                gt: Box::new(NodeSpec::Leaf(1)),
            }),
            gt: Box::new(NodeSpec::Leaf(1)),
        };
        let t = DecisionTree::from_spec(&spec);
        let leaves = t.enumerate_leaves(None);
        assert_eq!(leaves.len(), 3);
        assert_eq!(leaves[0].0.conditions(), &[SplitCondition::interval(0, Interval::at_most(17.0))]);
        let middle = leaves[1].0.conditions()[0];
        assert_eq!(
            middle,
            SplitCondition::interval(0, Interval::greater_than(17.0).intersect(&Interval::at_most(25.0)))
        );
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn single_leaf_enumeration() {
        let t = DecisionTree::from_spec(&NodeSpec::Leaf(0));
        assert!(t.enumerate_leaves(Some(1)).is_empty());
        assert_eq!(t.enumerate_leaves(Some(0)), vec![(Premise::new(), 0)]);
        assert_eq!(t.predict(&num(1.0)), 0);
    }

    fn mixed_schema() -> FeatureSchema {
        FeatureSchema {
            features: vec![
                FeatureSpec {
                    name: "a".into(),
                    kind: FeatureKind::Continuous { min: 0.0, max: 10.0 },
                    empirical: None,
                },
                FeatureSpec {
                    name: "c".into(),
                    kind: FeatureKind::Categorical {
                        values: vec!["p".into(), "q".into(), "r".into()],
                    },
                    empirical: None,
                },
                FeatureSpec {
                    name: "b".into(),
                    kind: FeatureKind::Continuous { min: 0.0, max: 10.0 },
                    empirical: None,
                },
            ],
            target: Target {
                name: "y".into(),
                labels: ["n".into(), "p".into()],
            },
        }
    }

    fn random_data(seed: u64, n: usize) -> (Vec<Instance>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Instance> = (0..n)
            .map(|_| {
                Instance::new(vec![
                    FeatureValue::Number(rng.gen_range(0..10) as f64),
                    FeatureValue::Category(rng.gen_range(0..3)),
                    FeatureValue::Number(rng.gen_range(0..10) as f64),
                ])
            })
            .collect();
        let ys = xs
            .iter()
            .map(|x| {
                let a = x.get(0).as_number();
                let c = x.get(1).as_category();
                let noise = rng.gen_bool(0.1);
                usize::from((a > 4.0 && c != 2) ^ noise)
            })
            .collect();
        (xs, ys)
    }

    #[test]
    fn training_instances_land_in_their_own_leaf_premise() {
        for seed in 0..20 {
            let (xs, ys) = random_data(seed, 60);
            let s = mixed_schema();
            let t = DecisionTree::fit(&s, &xs, &ys, TreeParams::default()).unwrap();
            let leaves = t.leaves(None);
            let premises: Vec<Premise> = leaves.iter().map(|&l| t.path_premise(l)).collect();
            for x in &xs {
                let hits: Vec<usize> = (0..leaves.len()).filter(|&i| satisfies(x, &premises[i])).collect();
                assert_eq!(hits.len(), 1);
                assert_eq!(leaves[hits[0]], t.leaf_of(x));
            }
            // every enumerated premise covers some training instance
            for p in &premises {
                assert!(xs.iter().any(|x| satisfies(x, p)));
            }
            // path consistency on fresh points
            let (probe, _) = random_data(seed + 1000, 200);
            for (p, (leaf, label)) in premises.iter().zip(leaves.iter().map(|&l| (l, t.leaf_label(l)))) {
                for x in probe.iter().filter(|x| satisfies(x, p)) {
                    if !t.routes_through_fallback(x) {
                        assert_eq!(t.leaf_of(x), leaf);
                        assert_eq!(t.predict(x), label);
                    }
                }
            }
        }
    }

    #[test]
    fn min_leaf_one_fits_noise_free_labels_perfectly() {
        let (xs, _) = random_data(5, 80);
        // a conjunction of one threshold and one category: every impure
        // node keeps an informative split
        let ys: Vec<Label> = xs
            .iter()
            .map(|x| usize::from(x.get(0).as_number() > 4.0 && x.get(1).as_category() != 2))
            .collect();
        let params = TreeParams {
            min_leaf: 1,
            ..TreeParams::default()
        };
        let t = DecisionTree::fit(&mixed_schema(), &xs, &ys, params).unwrap();
        assert!(xs.iter().zip(&ys).all(|(x, &y)| t.predict(x) == y));
    }

    #[test]
    fn zero_gain_nodes_stay_leaves() {
        // xor of two binary features: no single split is informative
        let xs: Vec<Instance> = [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0)]
            .iter()
            .map(|&(a, b)| Instance::new(vec![FeatureValue::Number(a), FeatureValue::Category(0), FeatureValue::Number(b)]))
            .collect();
        let ys = vec![1, 0, 0, 1];
        let params = TreeParams {
            min_leaf: 1,
            ..TreeParams::default()
        };
        let t = DecisionTree::fit(&mixed_schema(), &xs, &ys, params).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn categorical_feature_is_consumed_on_its_path() {
        let (xs, ys) = random_data(9, 120);
        let t = DecisionTree::fit(&mixed_schema(), &xs, &ys, TreeParams::default()).unwrap();
        for leaf in t.leaves(None) {
            let mut seen = 0;
            let mut id = leaf;
            while let Some((parent, sc)) = t.parents[id] {
                if sc.feature == 1 {
                    seen += 1;
                }
                id = parent;
            }
            assert!(seen <= 1);
        }
    }

    #[test]
    fn unseen_category_routes_to_largest_branch() {
        let s = mixed_schema();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..6 {
            xs.push(Instance::new(vec![FeatureValue::Number(1.0), FeatureValue::Category(0), FeatureValue::Number(i as f64)]));
            ys.push(0);
        }
        for i in 0..3 {
            xs.push(Instance::new(vec![FeatureValue::Number(1.0), FeatureValue::Category(1), FeatureValue::Number(i as f64)]));
            ys.push(1);
        }
        let t = DecisionTree::fit(&s, &xs, &ys, TreeParams::default()).unwrap();
        let unseen = Instance::new(vec![FeatureValue::Number(1.0), FeatureValue::Category(2), FeatureValue::Number(0.0)]);
        assert!(t.routes_through_fallback(&unseen));
        assert_eq!(t.predict(&unseen), 0);
    }

    #[test]
    fn max_depth_caps_the_tree() {
        let (xs, ys) = random_data(3, 100);
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let t = DecisionTree::fit(&mixed_schema(), &xs, &ys, params).unwrap();
        assert!(t.depth() <= 2);
    }
}
