//! Random forests of CART trees, each grown on its own bootstrap sample and
//! feature subset.

use super::tree::{grow_cart, CartParams, Criterion, Tree};
use super::ModelError;
use crate::rng::{mix_seed, rng_from};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features per tree; `None` means ceil(K / 3).
    pub k_features: Option<usize>,
    /// Bootstrap sample size; `None` means n.
    pub m_samples: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 10, min_leaf: 2, k_features: None, m_samples: None }
    }
}

/// Rows (with repetition) and features one tree is grown on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreePlan {
    pub rows: Vec<usize>,
    pub features: Vec<usize>,
}

impl TreePlan {
    /// Bootstrap plan of tree `index`, drawn from its own generator.
    pub fn draw(seed: u64, index: usize, n: usize, m: usize, n_features: usize, k: usize) -> TreePlan {
        let mut rng = rng_from(mix_seed(seed, index as u64));
        let rows = (0..m).map(|_| rng.random_range(0..n)).collect();
        let mut features = sample(&mut rng, n_features, k).into_vec();
        features.sort_unstable();
        TreePlan { rows, features }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub criterion: Criterion,
}

impl Forest {
    /// Mean tree output for regression; fraction of trees voting positive
    /// for classification.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = match self.criterion {
            Criterion::Mse => self.trees.iter().map(|t| t.predict(x)).sum(),
            Criterion::Gini => self.trees.iter().map(|t| f64::from(u8::from(t.predict(x) > 0.5))).sum(),
        };
        s / self.trees.len() as f64
    }

    /// The trees as additive terms of [`Forest::predict`]: each tree's leaf
    /// values replaced by its scaled contribution.
    pub fn additive_trees(&self) -> Vec<Tree> {
        let scale = 1.0 / self.trees.len() as f64;
        self.trees
            .iter()
            .map(|t| {
                let mut t = t.clone();
                for node in &mut t.nodes {
                    if let super::tree::Node::Leaf { value, .. } = node {
                        *value = scale
                            * match self.criterion {
                                Criterion::Mse => *value,
                                Criterion::Gini => f64::from(u8::from(*value > 0.5)),
                            };
                    }
                }
                t
            })
            .collect()
    }
}

fn resolve(params: &ForestParams, n: usize, n_features: usize) -> Result<(usize, usize), ModelError> {
    if params.n_trees < 1 {
        return Err(ModelError::Param("a forest needs at least one tree".into()));
    }
    let k = params.k_features.unwrap_or(n_features.div_ceil(3)).max(1);
    let m = params.m_samples.unwrap_or(n);
    if k > n_features {
        return Err(ModelError::Param(format!("k_features {k} exceeds {n_features} features")));
    }
    if m == 0 || m > n {
        return Err(ModelError::Param(format!("m_samples {m} must be in 1..={n}")));
    }
    Ok((k, m))
}

/// Fit with bootstrap plans drawn from `seed`.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    criterion: Criterion,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(ModelError::TooFewRows(0));
    }
    let n_features = x[0].len();
    let (k, m) = resolve(params, x.len(), n_features)?;
    let plans: Vec<TreePlan> =
        (0..params.n_trees).map(|t| TreePlan::draw(seed, t, x.len(), m, n_features, k)).collect();
    fit_forest_with_plans(x, y, criterion, params, &plans)
}

/// Fit one tree per supplied plan. Trees are grown in parallel and collected
/// in plan order, so the result does not depend on the thread count.
pub fn fit_forest_with_plans(
    x: &[Vec<f64>],
    y: &[f64],
    criterion: Criterion,
    params: &ForestParams,
    plans: &[TreePlan],
) -> Result<Forest, ModelError> {
    if plans.is_empty() {
        return Err(ModelError::Param("a forest needs at least one tree".into()));
    }
    let cart = CartParams { max_depth: params.max_depth, min_leaf: params.min_leaf };
    let trees = plans
        .par_iter()
        .map(|p| grow_cart(x, y, &p.rows, &p.features, criterion, &cart))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forest { trees, criterion })
}
