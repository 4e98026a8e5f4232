//! Gradient-boosted trees with second-order (Newton) leaf weights.

use super::linear::sigmoid;
use super::tree::{GrowSpec, Node, Tree};
use super::ModelError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `(y - F)^2 / 2`: g = F - y, h = 1.
    Squared,
    /// Binary log-loss on the margin F with labels 0/1: g = p - y, h = p(1 - p).
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per added leaf.
    pub gamma: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    /// Initial prediction; `None` means the mean target (squared loss) or the
    /// log-odds of the positive rate (logistic loss).
    pub base_score: Option<f64>,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 4,
            min_child_weight: 1.0,
            base_score: None,
        }
    }
}

/// Optimal leaf weight `-G / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let w = -g / (h + lambda);
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

/// Structure score `G^2 / (H + lambda)` of a node (twice its loss reduction).
fn structure_score(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda == 0.0 {
        0.0
    } else {
        g * g / (h + lambda)
    }
}

/// Prediction `base_score + learning_rate * sum_m f_m(x)`; leaves store the
/// unscaled weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub base_score: f64,
    pub learning_rate: f64,
    pub loss: Loss,
    pub trees: Vec<Tree>,
}

impl Gbt {
    /// Raw additive output (the margin for logistic loss).
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Regression value, or positive-class probability for logistic loss.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.loss {
            Loss::Squared => self.margin(x),
            Loss::Logistic => sigmoid(self.margin(x)),
        }
    }

    /// The trees with leaf values scaled by the learning rate, so that
    /// `margin = base_score + sum of their outputs`.
    pub fn additive_trees(&self) -> Vec<Tree> {
        self.trees
            .iter()
            .map(|t| {
                let mut t = t.clone();
                for node in &mut t.nodes {
                    if let Node::Leaf { value, .. } = node {
                        *value *= self.learning_rate;
                    }
                }
                t
            })
            .collect()
    }
}

fn gradients(loss: Loss, y: &[f64], f: &[f64], g: &mut [f64], h: &mut [f64]) {
    for i in 0..y.len() {
        match loss {
            Loss::Squared => {
                g[i] = f[i] - y[i];
                h[i] = 1.0;
            }
            Loss::Logistic => {
                let p = sigmoid(f[i]);
                g[i] = p - y[i];
                h[i] = (p * (1.0 - p)).max(1e-16);
            }
        }
    }
}

/// Fit one tree to gradient statistics: split gain is
/// `1/2 [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)] - gamma` and leaves get
/// [`leaf_weight`]. Node covers are hessian sums.
pub fn fit_newton_tree(x: &[Vec<f64>], g: &[f64], h: &[f64], params: &GbtParams) -> Tree {
    let lambda = params.lambda;
    let score = move |hs: f64, gs: f64| 0.5 * structure_score(gs, hs, lambda);
    let leaf = move |hs: f64, gs: f64| leaf_weight(gs, hs, lambda);
    let spec = GrowSpec {
        x,
        weight: h,
        value: g,
        max_depth: params.max_depth,
        min_count: 1,
        min_weight: params.min_child_weight,
        penalty: params.gamma,
        stop_pure: false,
        score: &score,
        leaf_value: &leaf,
    };
    let rows: Vec<usize> = (0..x.len()).collect();
    let features: Vec<usize> = (0..x.first().map_or(0, Vec::len)).collect();
    spec.grow(&rows, &features)
}

pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], loss: Loss, params: &GbtParams) -> Result<Gbt, ModelError> {
    let n = x.len();
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(ModelError::TooFewRows(0));
    }
    if params.n_rounds < 1 {
        return Err(ModelError::Param("n_rounds must be at least 1".into()));
    }
    if !(params.lambda >= 0.0) || !(params.learning_rate > 0.0) {
        return Err(ModelError::Param("lambda must be >= 0 and learning_rate > 0".into()));
    }
    let base_score = match (params.base_score, loss) {
        (Some(b), _) => b,
        (None, Loss::Squared) => y.iter().sum::<f64>() / n as f64,
        (None, Loss::Logistic) => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(ModelError::Param("logistic loss takes 0/1 labels".into()));
            }
            let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let mut model = Gbt { base_score, learning_rate: params.learning_rate, loss, trees: Vec::with_capacity(params.n_rounds) };
    let mut f = vec![base_score; n];
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..params.n_rounds {
        gradients(loss, y, &f, &mut g, &mut h);
        let tree = fit_newton_tree(x, &g, &h, params);
        for (fi, xi) in f.iter_mut().zip(x) {
            *fi += params.learning_rate * tree.predict(xi);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_leaf_weight() {
        // targets {1, 3} at prediction 0: G = -4, H = 2
        assert!((leaf_weight(-4.0, 2.0, 1.0) - 4.0 / 3.0).abs() < 1e-12);
        let x = vec![vec![0.0], vec![0.0]];
        let p = GbtParams { n_rounds: 1, learning_rate: 1.0, base_score: Some(0.0), ..Default::default() };
        let m = fit_gbt(&x, &[1.0, 3.0], Loss::Squared, &p).unwrap();
        assert!((m.trees[0].predict(&[0.0]) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_stops_learning() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![f64::from(i)]).collect();
        let p = GbtParams { n_rounds: 3, ..Default::default() };
        let m = fit_gbt(&x, &[2.0; 5], Loss::Squared, &p).unwrap();
        for t in &m.trees {
            assert_eq!(t.nodes.len(), 1);
            assert_eq!(t.predict(&[0.0]), 0.0);
        }
    }

    #[test]
    fn isolating_tree_reproduces_targets() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![f64::from(i)]).collect();
        let y = [3.0, -1.0, 0.5, 7.0, 2.0, 2.5, -4.0, 1.0];
        let p = GbtParams { n_rounds: 1, learning_rate: 1.0, lambda: 0.0, max_depth: 10, ..Default::default() };
        let m = fit_gbt(&x, &y, Loss::Squared, &p).unwrap();
        for (r, t) in x.iter().zip(y) {
            assert!((m.predict(r) - t).abs() < 1e-12);
        }
    }
}
