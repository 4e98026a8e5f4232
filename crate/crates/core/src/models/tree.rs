//! Binary decision trees: the shared node layout used by CART, random forests
//! and boosting, and the CART grower.

use super::ModelError;
use serde::{Deserialize, Serialize};

/// A node; rows with `x[feature] <= threshold` go left. `cover` is the number
/// (or hessian weight) of training rows that reached the node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64, cover: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize, value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Leaf { cover, .. } | Node::Split { cover, .. } => cover,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Node::Leaf { value, .. } | Node::Split { value, .. } => value,
        }
    }
}

/// Nodes in creation order; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value, cover }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(t, left).max(rec(t, right)),
            }
        }
        rec(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Squared error; leaves hold the mean target.
    Mse,
    /// Gini impurity on 0/1 labels; leaves hold the fraction of positives, so
    /// the majority class is `value > 0.5`.
    Gini,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        Self { max_depth: 6, min_leaf: 5 }
    }
}

/// Gini impurity `1 - sum p_k^2` of a node with the given class counts.
pub fn gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

/// Per-row statistics and split rules of one tree fit. Each row carries a
/// weight `w` (1 for CART, the hessian for boosting) and a value `v` (the
/// target, or the gradient). A node's quality is `score(W, V)` over its
/// summed statistics; a split gains `score(left) + score(right) -
/// score(node) - penalty`.
pub(crate) struct GrowSpec<'a> {
    pub x: &'a [Vec<f64>],
    pub weight: &'a [f64],
    pub value: &'a [f64],
    pub max_depth: usize,
    pub min_count: usize,
    pub min_weight: f64,
    pub penalty: f64,
    /// Stop at nodes whose values are all equal.
    pub stop_pure: bool,
    pub score: &'a dyn Fn(f64, f64) -> f64,
    pub leaf_value: &'a dyn Fn(f64, f64) -> f64,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl GrowSpec<'_> {
    /// Grow on `rows` (duplicates allowed, as in bootstrap samples) over
    /// `features`. Splits maximize gain; ties go to the lower feature index,
    /// then the lower threshold. Thresholds are midpoints between consecutive
    /// distinct values.
    pub fn grow(&self, rows: &[usize], features: &[usize]) -> Tree {
        let mut features = features.to_vec();
        features.sort_unstable();
        features.dedup();
        let lists: Vec<Vec<usize>> = features
            .iter()
            .map(|&f| {
                let mut s = rows.to_vec();
                s.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
                s
            })
            .collect();
        let mut tree = Tree { nodes: Vec::new() };
        self.node(rows.to_vec(), lists, &features, 0, &mut tree);
        tree
    }

    fn node(&self, rows: Vec<usize>, lists: Vec<Vec<usize>>, features: &[usize], depth: usize, tree: &mut Tree) -> usize {
        let (w, v) = rows.iter().fold((0.0, 0.0), |(w, v), &i| (w + self.weight[i], v + self.value[i]));
        let value = (self.leaf_value)(w, v);
        let id = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value, cover: w });
        let pure = self.stop_pure && rows.iter().all(|&i| self.value[i] == self.value[rows[0]]);
        if pure || depth >= self.max_depth || rows.len() < 2 * self.min_count.max(1) {
            return id;
        }
        let parent = (self.score)(w, v);
        let mut best: Option<Best> = None;
        for (fi, &f) in features.iter().enumerate() {
            let sorted = &lists[fi];
            let (mut wl, mut vl) = (0.0, 0.0);
            for pos in 0..sorted.len() - 1 {
                let r = sorted[pos];
                wl += self.weight[r];
                vl += self.value[r];
                let (a, b) = (self.x[r][f], self.x[sorted[pos + 1]][f]);
                let nl = pos + 1;
                if a == b || nl < self.min_count || sorted.len() - nl < self.min_count {
                    continue;
                }
                let wr = w - wl;
                if wl < self.min_weight || wr < self.min_weight {
                    continue;
                }
                let gain = (self.score)(wl, vl) + (self.score)(wr, v - vl) - parent - self.penalty;
                if gain > 0.0 && best.as_ref().is_none_or(|bst| gain > bst.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best { gain, feature: f, threshold });
                }
            }
        }
        let Some(best) = best else { return id };
        let goes_left = |i: &usize| self.x[*i][best.feature] <= best.threshold;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|i| goes_left(i));
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in lists {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(goes_left);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = self.node(left_rows, left_lists, features, depth + 1, tree);
        let right = self.node(right_rows, right_lists, features, depth + 1, tree);
        tree.nodes[id] =
            Node::Split { feature: best.feature, threshold: best.threshold, left, right, value, cover: w };
        id
    }
}

/// Grow a CART tree on `rows` considering only `features`. With 0/1 labels
/// the gini decrease is twice the squared-error decrease, so both criteria
/// pick the same splits; the criterion only validates labels.
pub fn grow_cart(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
    params: &CartParams,
) -> Result<Tree, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::TooFewRows(0));
    }
    if criterion == Criterion::Gini && rows.iter().any(|&i| y[i] != 0.0 && y[i] != 1.0) {
        return Err(ModelError::Param("gini trees take 0/1 labels".into()));
    }
    let min_leaf = params.min_leaf.max(1);
    if rows.len() < min_leaf {
        return Err(ModelError::TooFewRows(rows.len()));
    }
    let ones = vec![1.0; y.len()];
    let spec = GrowSpec {
        x,
        weight: &ones,
        value: y,
        max_depth: params.max_depth,
        min_count: min_leaf,
        min_weight: 0.0,
        penalty: 0.0,
        stop_pure: true,
        score: &|n, s| s * s / n,
        leaf_value: &|n, s| s / n,
    };
    Ok(spec.grow(rows, features))
}

/// CART on all rows and features.
pub fn fit_cart(x: &[Vec<f64>], y: &[f64], criterion: Criterion, params: &CartParams) -> Result<Tree, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let rows: Vec<usize> = (0..x.len()).collect();
    let features: Vec<usize> = (0..x.first().map_or(0, Vec::len)).collect();
    grow_cart(x, y, &rows, &features, criterion, params)
}
