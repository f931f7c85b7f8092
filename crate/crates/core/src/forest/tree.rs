use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Criterion;
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { leaf_id: usize, distribution: Vec<f64> },
}

/// A CART classification tree. Node 0 is the root; records with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub depth: usize,
    pub n_leaves: usize,
}

impl DecisionTree {
    pub fn single_leaf(distribution: Vec<f64>) -> Self {
        DecisionTree { nodes: vec![Node::Leaf { leaf_id: 0, distribution }], depth: 0, n_leaves: 1 }
    }

    fn leaf_node(&self, row: &[f64]) -> &Node {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn leaf_of(&self, row: &[f64]) -> usize {
        match self.leaf_node(row) {
            Node::Leaf { leaf_id, .. } => *leaf_id,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn distribution_of(&self, row: &[f64]) -> &[f64] {
        match self.leaf_node(row) {
            Node::Leaf { distribution, .. } => distribution,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Leaf distributions indexed by leaf id.
    pub fn leaf_distributions(&self) -> Vec<&[f64]> {
        let mut out = vec![&[][..]; self.n_leaves];
        for node in &self.nodes {
            if let Node::Leaf { leaf_id, distribution } = node {
                out[*leaf_id] = distribution;
            }
        }
        out
    }
}

pub(crate) struct GrowSettings<'a> {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: usize,
    pub class_weights: &'a [f64],
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Lower weighted child impurity wins; exact ties go to the lower feature
    /// index, then the lower threshold.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score < o.score
                    || (self.score == o.score
                        && (self.feature < o.feature || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

/// `sum_c w_c * log(w_total / w_c)` style impurity mass: the node's total
/// weight times its impurity.
fn impurity_mass(criterion: Criterion, class_w: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Gini => total - class_w.iter().map(|w| w * w).sum::<f64>() / total,
        Criterion::Entropy => class_w.iter().filter(|&&w| w > 0.0).map(|&w| -w * (w / total).log2()).sum(),
        Criterion::LogLoss => class_w.iter().filter(|&&w| w > 0.0).map(|&w| -w * (w / total).ln()).sum(),
    }
}

pub(crate) struct TreeBuilder<'a> {
    data: &'a Dataset,
    settings: GrowSettings<'a>,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    n_leaves: usize,
    depth: usize,
    // scratch: (value, sample position in the node slice)
    sorted: Vec<(f64, usize)>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(data: &'a Dataset, settings: GrowSettings<'a>, rng: &'a mut ChaCha8Rng) -> Self {
        TreeBuilder { data, settings, rng, nodes: Vec::new(), n_leaves: 0, depth: 0, sorted: Vec::new() }
    }

    /// Grows a tree on `samples` (record positions, repeated for bootstrap
    /// multiplicity).
    pub fn grow(mut self, mut samples: Vec<usize>) -> DecisionTree {
        // (node slot, start, end, depth)
        let mut work = vec![(0usize, 0usize, samples.len(), 0usize)];
        self.nodes.push(Node::Leaf { leaf_id: usize::MAX, distribution: Vec::new() });
        while let Some((slot, start, end, depth)) = work.pop() {
            self.depth = self.depth.max(depth);
            let node_samples = &mut samples[start..end];
            let class_w = self.class_weights(node_samples);
            match self.find_split(node_samples, &class_w, depth) {
                None => {
                    let total: f64 = class_w.iter().sum();
                    let distribution = class_w.iter().map(|w| w / total).collect();
                    self.nodes[slot] = Node::Leaf { leaf_id: self.n_leaves, distribution };
                    self.n_leaves += 1;
                }
                Some(c) => {
                    let mid = start + stable_partition(node_samples, |&i| self.data.value(i, c.feature) <= c.threshold);
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(Node::Leaf { leaf_id: usize::MAX, distribution: Vec::new() });
                    self.nodes.push(Node::Leaf { leaf_id: usize::MAX, distribution: Vec::new() });
                    self.nodes[slot] = Node::Split { feature: c.feature, threshold: c.threshold, left, right };
                    // left subtree is numbered first
                    work.push((right, mid, end, depth + 1));
                    work.push((left, start, mid, depth + 1));
                }
            }
        }
        DecisionTree { nodes: self.nodes, depth: self.depth, n_leaves: self.n_leaves }
    }

    fn class_weights(&self, samples: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.data.n_classes()];
        for &i in samples {
            let l = self.data.labels()[i];
            w[l] += self.settings.class_weights[l];
        }
        w
    }

    fn find_split(&mut self, samples: &[usize], class_w: &[f64], depth: usize) -> Option<Candidate> {
        let s = &self.settings;
        let max_features = s.max_features;
        if class_w.iter().filter(|&&w| w > 0.0).count() <= 1
            || s.max_depth.is_some_and(|d| depth >= d)
            || samples.len() < 2 * s.min_samples_leaf
        {
            return None;
        }
        let p = self.data.n_features();
        let mut order: Vec<usize> = (0..p).collect();
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        let mut drawn = 0;
        // Lazy Fisher-Yates: features are drawn without replacement until
        // `max_features` non-constant ones have been evaluated.
        while evaluated < max_features && drawn < p {
            let pick = self.rng.random_range(drawn..p);
            order.swap(drawn, pick);
            let feature = order[drawn];
            drawn += 1;
            if let Some(c) = self.best_threshold(samples, class_w, feature) {
                evaluated += 1;
                if c.beats(&best) {
                    best = Some(c);
                }
            } else if !self.is_constant(samples, feature) {
                // non-constant but no admissible cut under min_samples_leaf
                evaluated += 1;
            }
        }
        best
    }

    fn is_constant(&self, samples: &[usize], feature: usize) -> bool {
        let first = self.data.value(samples[0], feature);
        samples.iter().all(|&i| self.data.value(i, feature) == first)
    }

    fn best_threshold(&mut self, samples: &[usize], class_w: &[f64], feature: usize) -> Option<Candidate> {
        let data = self.data;
        let s = &self.settings;
        self.sorted.clear();
        self.sorted.extend(samples.iter().enumerate().map(|(k, &i)| (data.value(i, feature), k)));
        self.sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let m = self.sorted.len();
        if self.sorted[0].0 == self.sorted[m - 1].0 {
            return None;
        }
        let total: f64 = class_w.iter().sum();
        let mut left = vec![0.0; class_w.len()];
        let mut right = class_w.to_vec();
        let mut left_total = 0.0;
        let mut best: Option<Candidate> = None;
        for pos in 1..m {
            let i = samples[self.sorted[pos - 1].1];
            let l = data.labels()[i];
            let w = s.class_weights[l];
            left[l] += w;
            right[l] -= w;
            left_total += w;
            let (prev, next) = (self.sorted[pos - 1].0, self.sorted[pos].0);
            if prev == next || pos < s.min_samples_leaf || m - pos < s.min_samples_leaf {
                continue;
            }
            let right_total = total - left_total;
            let score = impurity_mass(s.criterion, &left, left_total) + impurity_mass(s.criterion, &right, right_total);
            let mut threshold = prev + (next - prev) / 2.0;
            if threshold >= next {
                threshold = prev;
            }
            let c = Candidate { score, feature, threshold };
            if c.beats(&best) {
                best = Some(c);
            }
        }
        best
    }
}

/// Moves elements satisfying `pred` to the front, keeping relative order on
/// both sides. Returns the count of matching elements.
fn stable_partition<T: Copy>(xs: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = xs.iter().partition(|x| pred(x));
    let k = yes.len();
    xs[..k].copy_from_slice(&yes);
    xs[k..].copy_from_slice(&no);
    k
}
