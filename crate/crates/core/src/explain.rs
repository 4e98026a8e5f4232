//! Shapley-value attributions: exact path-dependent TreeSHAP for tree models,
//! Kernel SHAP for everything else, global importance rankings, and keyword
//! profiles of embedding dimensions.

use crate::matrix::{csv_field, FeatureMatrix};
use crate::models::tree::{Node, Tree};
use crate::models::{FittedParams, Learner, TrainedModel, NEGATIVE_SCORE};
use crate::rng::rng_from;
use crate::textrep::EmbeddingTable;
use crate::Task;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("TreeSHAP needs a cart, forest or gbt model, got {0}")]
    NotTreeModel(String),
    #[error("{0}")]
    Shape(String),
    #[error("need at least {need} coalitions for {features} features, got {got}")]
    TooFewCoalitions { need: usize, features: usize, got: usize },
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("dimension {dim} out of range for {d}-dimensional embeddings")]
    DimOutOfRange { dim: usize, d: usize },
}

/// Shapley values of one model output: `base + sum(phi) = output`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base: f64,
    pub phi: Vec<f64>,
    pub output: f64,
}

impl Attribution {
    pub fn local_accuracy_error(&self) -> f64 {
        (self.base + self.phi.iter().sum::<f64>() - self.output).abs()
    }
}

#[derive(Clone, Copy, Debug)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    let d = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / d;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let PathElem { one, zero, .. } = path[i];
    let d = (l + 1) as f64;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * d / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (l - j) as f64 / d;
        } else {
            path[j].weight = path[j].weight * d / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `i` removed.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let PathElem { one, zero, .. } = path[i];
    let d = (l + 1) as f64;
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = next * d / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (l - j) as f64 / d;
        } else if zero != 0.0 {
            total += path[j].weight * d / (zero * (l - j) as f64);
        }
    }
    total
}

/// Fractions of a node's cover sent to its left and right children.
fn child_fractions(tree: &Tree, left: usize, right: usize) -> (f64, f64) {
    let (cl, cr) = (tree.nodes[left].cover(), tree.nodes[right].cover());
    if cl + cr > 0.0 {
        (cl / (cl + cr), cr / (cl + cr))
    } else {
        (0.5, 0.5)
    }
}

/// Cover-weighted mean leaf value: the tree's output with no feature known.
pub fn expected_value(tree: &Tree) -> f64 {
    fn rec(t: &Tree, i: usize) -> f64 {
        match t.nodes[i] {
            Node::Leaf { value, .. } => value,
            Node::Split { left, right, .. } => {
                let (fl, fr) = child_fractions(t, left, right);
                fl * rec(t, left) + fr * rec(t, right)
            }
        }
    }
    rec(tree, 0)
}

fn recurse(tree: &Tree, x: &[f64], phi: &mut [f64], node: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    extend(&mut path, zero, one, feature);
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature.expect("non-root path element")] += w * (e.one - e.zero) * value;
            }
        }
        Node::Split { feature: f, threshold, left, right, .. } => {
            let (hot, cold) = if x[f] <= threshold { (left, right) } else { (right, left) };
            let (fl, fr) = child_fractions(tree, left, right);
            let (f_hot, f_cold) = if hot == left { (fl, fr) } else { (fr, fl) };
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, x, phi, hot, path.clone(), in_zero * f_hot, in_one, Some(f));
            recurse(tree, x, phi, cold, path, in_zero * f_cold, 0.0, Some(f));
        }
    }
}

/// Exact path-dependent Shapley values of one tree at `x`.
pub fn tree_shap_single(tree: &Tree, x: &[f64]) -> Attribution {
    let mut phi = vec![0.0; x.len()];
    recurse(tree, x, &mut phi, 0, Vec::new(), 1.0, 1.0, None);
    Attribution { base: expected_value(tree), phi, output: tree.predict(x) }
}

/// Attribution of an additive ensemble `offset + sum of trees`.
pub fn tree_shap_ensemble(trees: &[Tree], offset: f64, x: &[f64]) -> Attribution {
    let mut out = Attribution { base: offset, phi: vec![0.0; x.len()], output: offset };
    for t in trees {
        let a = tree_shap_single(t, x);
        out.base += a.base;
        out.output += a.output;
        for (p, q) in out.phi.iter_mut().zip(&a.phi) {
            *p += q;
        }
    }
    out
}

/// Additive trees and offset of a tree learner; logistic boosting is
/// explained on the margin.
fn additive_form(learner: &Learner) -> Option<(Vec<Tree>, f64)> {
    match learner {
        Learner::Tree(t) => Some((vec![t.clone()], 0.0)),
        Learner::Forest(f) => Some((f.additive_trees(), 0.0)),
        Learner::Gbt(g) => Some((g.additive_trees(), g.base_score)),
        _ => None,
    }
}

fn prepared(model: &TrainedModel, x: &[f64]) -> Vec<f64> {
    match &model.standardizer {
        Some(s) => s.apply(x),
        None => x.to_vec(),
    }
}

/// TreeSHAP attributions of one raw feature row: one entry for regression,
/// one per class member for one-vs-rest classification.
pub fn tree_shap(model: &TrainedModel, x: &[f64]) -> Result<Vec<Attribution>, ExplainError> {
    if !model.family().is_tree_based() {
        return Err(ExplainError::NotTreeModel(model.family().as_str().into()));
    }
    if x.len() != model.manifest.len() {
        return Err(ExplainError::Shape(format!("{} features, model expects {}", x.len(), model.manifest.len())));
    }
    let z = prepared(model, x);
    let explain = |l: &Learner| match l {
        Learner::AlwaysNegative => Ok(Attribution { base: NEGATIVE_SCORE, phi: vec![0.0; z.len()], output: NEGATIVE_SCORE }),
        other => additive_form(other)
            .map(|(trees, offset)| tree_shap_ensemble(&trees, offset, &z))
            .ok_or_else(|| ExplainError::NotTreeModel(model.family().as_str().into())),
    };
    match &model.params {
        FittedParams::Single(l) => Ok(vec![explain(l)?]),
        FittedParams::Ovr(e) => e.members.iter().map(explain).collect(),
        FittedParams::Softmax(_) => Err(ExplainError::NotTreeModel(model.family().as_str().into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelShapConfig {
    /// Coalitions evaluated; all `2^M - 2` proper nonempty subsets are used
    /// when this budget covers them.
    pub n_coalitions: usize,
    pub seed: u64,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self { n_coalitions: 2048, seed: 0 }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mean of `f` over the background with the features in `mask` taken from `x`.
fn coalition_value(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64], background: &[Vec<f64>], mask: &[bool]) -> f64 {
    let mut mean = 0.0;
    let mut row = vec![0.0; x.len()];
    for (i, b) in background.iter().enumerate() {
        for j in 0..x.len() {
            row[j] = if mask[j] { x[j] } else { b[j] };
        }
        let v = f(&row);
        // running mean keeps sentinel scores like f64::MIN finite
        mean += (v - mean) / (i + 1) as f64;
    }
    mean
}

/// Kernel SHAP of a scalar function: a Shapley-kernel weighted least-squares
/// fit over coalitions, with absent features imputed from the background and
/// local accuracy imposed as a constraint.
pub fn kernel_shap(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    background: &[Vec<f64>],
    config: &KernelShapConfig,
) -> Result<Attribution, ExplainError> {
    let m = x.len();
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    if background.iter().any(|b| b.len() != m) {
        return Err(ExplainError::Shape(format!("background rows must have {m} features")));
    }
    if config.n_coalitions < m + 2 {
        return Err(ExplainError::TooFewCoalitions { need: m + 2, features: m, got: config.n_coalitions });
    }
    let base = coalition_value(f, x, background, &vec![false; m]);
    let output = f(x);
    if m == 0 {
        return Ok(Attribution { base, phi: Vec::new(), output });
    }
    if m == 1 {
        return Ok(Attribution { base, phi: vec![output - base], output });
    }
    let delta = output - base;

    let exact = m < 63 && (1u64 << m) - 2 <= config.n_coalitions as u64;
    let mut masks: Vec<Vec<bool>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    if exact {
        for bits in 1..(1u64 << m) - 1 {
            let mask: Vec<bool> = (0..m).map(|j| bits >> j & 1 == 1).collect();
            let s = bits.count_ones() as usize;
            weights.push((m - 1) as f64 / (binomial(m, s) * (s * (m - s)) as f64));
            masks.push(mask);
        }
    } else {
        // sizes drawn in proportion to the kernel mass of each size, each
        // draw paired with its complement
        let size_mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
        let total: f64 = size_mass.iter().sum();
        let mut rng = rng_from(config.seed);
        while masks.len() + 1 < config.n_coalitions {
            let mut u = rng.random::<f64>() * total;
            let mut s = m - 1;
            for (i, w) in size_mass.iter().enumerate() {
                if u < *w {
                    s = i + 1;
                    break;
                }
                u -= w;
            }
            let mut mask = vec![false; m];
            for j in sample(&mut rng, m, s) {
                mask[j] = true;
            }
            let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
            masks.push(mask);
            masks.push(complement);
            weights.extend([1.0, 1.0]);
        }
    }

    let values: Vec<f64> = masks.par_iter().map(|mask| coalition_value(f, x, background, mask)).collect();
    // eliminate phi_{m-1} = delta - sum of the others
    let rows = masks.len();
    let a = DMatrix::from_fn(rows, m - 1, |r, j| {
        let last = f64::from(u8::from(masks[r][m - 1]));
        (f64::from(u8::from(masks[r][j])) - last) * weights[r].sqrt()
    });
    let b = DVector::from_fn(rows, |r, _| {
        let last = f64::from(u8::from(masks[r][m - 1]));
        (values[r] - base - last * delta) * weights[r].sqrt()
    });
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-12).map_err(|e| ExplainError::Shape(e.to_string()))?;
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(Attribution { base, phi, output })
}

/// Attributions of every model output for one row: TreeSHAP for tree
/// families, Kernel SHAP against `background` otherwise. Logistic boosting
/// members are explained on the margin.
pub fn explain_row(
    model: &TrainedModel,
    x: &[f64],
    background: &[Vec<f64>],
    config: &KernelShapConfig,
) -> Result<Vec<Attribution>, ExplainError> {
    if model.family().is_tree_based() {
        return tree_shap(model, x);
    }
    let outputs = match model.task {
        Task::Regression => 1,
        Task::Classification => model.n_classes,
    };
    (0..outputs)
        .map(|k| {
            let f = |r: &[f64]| match model.task {
                Task::Regression => model.predict_value(r),
                Task::Classification => model.predict_scores(r)[k],
            };
            kernel_shap(&f, x, background, config)
        })
        .collect()
}

/// Mean |phi| per feature, ranked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    /// `(column index, name, mean |phi|)`, descending; ties by column index.
    pub ranking: Vec<(usize, String, f64)>,
    /// `phi[row][feature]` for the beeswarm export: the single output, or the
    /// member of the class predicted for that row.
    pub phi: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl GlobalImportance {
    /// `feature,row,phi,value` rows, feature-major in ranking order.
    pub fn beeswarm_csv(&self) -> String {
        let mut s = String::from("feature,row,phi,value\n");
        for (j, name, _) in &self.ranking {
            for (r, (p, v)) in self.phi.iter().zip(&self.values).enumerate() {
                let _ = writeln!(s, "{},{r},{},{}", csv_field(name), p[*j], v[*j]);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,feature,mean_abs_shap\n");
        for (i, (_, name, v)) in self.ranking.iter().enumerate() {
            let _ = writeln!(s, "{},{},{v}", i + 1, csv_field(name));
        }
        s
    }

    pub fn top(&self, n: usize) -> &[(usize, String, f64)] {
        &self.ranking[..n.min(self.ranking.len())]
    }
}

/// Mean absolute Shapley value of every feature over the rows of `sample`;
/// one-vs-rest classifiers sum the per-class means.
pub fn global_importance(
    model: &TrainedModel,
    sample: &FeatureMatrix,
    background: &[Vec<f64>],
    config: &KernelShapConfig,
) -> Result<GlobalImportance, ExplainError> {
    model.check_manifest(sample).map_err(|e| ExplainError::Shape(e.to_string()))?;
    if sample.n_rows() == 0 {
        return Err(ExplainError::Shape("empty sample".into()));
    }
    let p = sample.n_cols();
    let per_row: Vec<Vec<Attribution>> = (0..sample.n_rows())
        .into_par_iter()
        .map(|r| explain_row(model, sample.row(r), background, config))
        .collect::<Result<_, _>>()?;
    let mut score = vec![0.0; p];
    for attrs in &per_row {
        for a in attrs {
            for (s, v) in score.iter_mut().zip(&a.phi) {
                *s += v.abs();
            }
        }
    }
    for s in &mut score {
        *s /= per_row.len() as f64;
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let phi = per_row
        .iter()
        .enumerate()
        .map(|(r, attrs)| {
            let k = if attrs.len() > 1 { model.predict_class(sample.row(r)) } else { 0 };
            attrs[k].phi.clone()
        })
        .collect();
    Ok(GlobalImportance {
        ranking: order.into_iter().map(|j| (j, sample.names()[j].clone(), score[j])).collect(),
        phi,
        values: sample.rows().map(<[f64]>::to_vec).collect(),
        names: sample.names().to_vec(),
    })
}

/// Words with the highest and lowest values on one embedding dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordProfile {
    pub dim: usize,
    /// Descending by value.
    pub top: Vec<(String, f64)>,
    /// Ascending by value.
    pub bottom: Vec<(String, f64)>,
}

pub const DEFAULT_KEYWORDS: usize = 15;

pub fn embedding_keywords(table: &EmbeddingTable, dim: usize, k: usize) -> Result<KeywordProfile, ExplainError> {
    if dim >= table.dim() {
        return Err(ExplainError::DimOutOfRange { dim, d: table.dim() });
    }
    let mut words: Vec<(String, f64)> =
        table.terms().iter().enumerate().map(|(i, t)| (t.clone(), table.input_vector(i)[dim])).collect();
    let k = k.min(words.len());
    words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top = words[..k].to_vec();
    words.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let bottom = words[..k].to_vec();
    Ok(KeywordProfile { dim, top, bottom })
}

impl KeywordProfile {
    pub fn to_text(&self) -> String {
        let join = |ws: &[(String, f64)]| ws.iter().map(|(w, v)| format!("{w} ({v:.4})")).collect::<Vec<_>>().join(", ");
        format!("embedding_{}\n  highest: {}\n  lowest: {}\n", self.dim, join(&self.top), join(&self.bottom))
    }
}

/// Dimension index of an embedding feature column name.
pub fn embedding_dim_of(name: &str) -> Option<usize> {
    name.strip_prefix("embedding_")?.parse().ok()
}
