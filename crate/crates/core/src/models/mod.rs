//! Six learner families behind one envelope: fitting, one-vs-rest multiclass,
//! prediction and persistence.

pub mod forest;
pub mod gbt;
pub mod linear;
pub mod mlp;
pub mod svm;
pub mod tree;

use crate::matrix::FeatureMatrix;
use crate::rng::mix_seed;
use crate::Task;
use forest::{fit_forest, Forest, ForestParams};
use gbt::{fit_gbt, Gbt, GbtParams, Loss};
use linear::{fit_linear, fit_logistic, sigmoid, LinearModel, LogisticParams};
use mlp::{fit_mlp, Head, Mlp, MlpParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use svm::{fit_svc, fit_svr, SvmModel, SvmParams};
use thiserror::Error;
use tree::{fit_cart, CartParams, Criterion, Tree};

/// Version of the persisted model envelope.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid hyperparameter: {0}")]
    Param(String),
    #[error("only one class present in the training labels")]
    SingleClass,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("model file format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("model was trained for {found}, pipeline expects {expected}")]
    TaskMismatch { found: Task, expected: Task },
    #[error("feature columns differ from the training manifest: {0}")]
    Manifest(String),
    #[error("cannot parse model file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Mlp,
    Cart,
    Svm,
    Forest,
    Gbt,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::Linear, Family::Mlp, Family::Cart, Family::Svm, Family::Forest, Family::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Mlp => "mlp",
            Family::Cart => "cart",
            Family::Svm => "svm",
            Family::Forest => "forest",
            Family::Gbt => "gbt",
        }
    }

    /// Column label in report tables.
    pub fn display_name(self, task: Task) -> &'static str {
        match (self, task) {
            (Family::Linear, _) => "LR",
            (Family::Mlp, _) => "ANN",
            (Family::Cart, _) => "DT",
            (Family::Svm, Task::Regression) => "SVR",
            (Family::Svm, Task::Classification) => "SVM",
            (Family::Forest, _) => "RF",
            (Family::Gbt, _) => "XGBoost",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(self, Family::Cart | Family::Forest | Family::Gbt)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown model family '{s}'"))
    }
}

/// Linear family settings: ridge penalty for regression, gradient-descent
/// settings for logistic classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub ridge: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        let l = LogisticParams::default();
        Self { ridge: 1.0, learning_rate: l.learning_rate, epochs: l.epochs, batch_size: l.batch_size, l2: l.l2 }
    }
}

impl LinearParams {
    fn logistic(&self) -> LogisticParams {
        LogisticParams { learning_rate: self.learning_rate, epochs: self.epochs, batch_size: self.batch_size, l2: self.l2 }
    }
}

/// A model family with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear(LinearParams),
    Mlp(MlpParams),
    Cart(CartParams),
    Svm(SvmParams),
    Forest(ForestParams),
    Gbt(GbtParams),
}

impl ModelSpec {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Linear => ModelSpec::Linear(LinearParams::default()),
            Family::Mlp => ModelSpec::Mlp(MlpParams::default()),
            Family::Cart => ModelSpec::Cart(CartParams::default()),
            Family::Svm => ModelSpec::Svm(SvmParams::default()),
            Family::Forest => ModelSpec::Forest(ForestParams::default()),
            Family::Gbt => ModelSpec::Gbt(GbtParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Linear(_) => Family::Linear,
            ModelSpec::Mlp(_) => Family::Mlp,
            ModelSpec::Cart(_) => Family::Cart,
            ModelSpec::Svm(_) => Family::Svm,
            ModelSpec::Forest(_) => Family::Forest,
            ModelSpec::Gbt(_) => Family::Gbt,
        }
    }

    /// Whether inputs are z-scored before fitting.
    pub fn standardizes(&self) -> bool {
        matches!(self, ModelSpec::Linear(_) | ModelSpec::Mlp(_) | ModelSpec::Svm(_))
    }
}

/// Column-wise z-scoring fitted on training rows. Constant columns are only
/// centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..p)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// One fitted predictor producing a single real score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Linear(LinearModel),
    /// Probability of the positive class.
    Logistic(LinearModel),
    Mlp(Mlp),
    Tree(Tree),
    Svm(SvmModel),
    Forest(Forest),
    Gbt(Gbt),
    /// Member for a class absent from the training labels.
    AlwaysNegative,
}

/// Score assigned by an always-negative one-vs-rest member; below any score
/// a trained member can produce.
pub const NEGATIVE_SCORE: f64 = f64::MIN;

impl Learner {
    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Learner::Linear(m) => m.decision(x),
            Learner::Logistic(m) => sigmoid(m.decision(x)),
            Learner::Mlp(m) => m.forward(x)[0],
            Learner::Tree(t) => t.predict(x),
            Learner::Svm(m) => m.decision(x),
            Learner::Forest(f) => f.predict(x),
            Learner::Gbt(g) => g.predict(x),
            Learner::AlwaysNegative => NEGATIVE_SCORE,
        }
    }

    /// Whether the binary member predicts the positive class.
    pub fn positive(&self, x: &[f64]) -> bool {
        match self {
            Learner::Svm(m) => m.decision(x) > 0.0,
            Learner::AlwaysNegative => false,
            other => other.score(x) > 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvREnsemble {
    /// Member `k` separates class `k` from the rest.
    pub members: Vec<Learner>,
}

impl OvREnsemble {
    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.members.iter().map(|m| m.score(x)).collect()
    }
}

/// Index of the highest score; ties go to the lower class.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Fit one binary member per class in `0..n_classes` with `fit_member`
/// (given 0/1 labels and the member index). Members are fitted in parallel;
/// absent classes get an always-negative member.
pub fn one_vs_rest<F>(y: &[usize], n_classes: usize, fit_member: F) -> Result<OvREnsemble, ModelError>
where
    F: Fn(&[f64], usize) -> Result<Learner, ModelError> + Sync,
{
    let mut present = vec![false; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(ModelError::Shape(format!("label {c} outside 0..{n_classes}")));
        }
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ModelError::SingleClass);
    }
    let members = (0..n_classes)
        .into_par_iter()
        .map(|k| {
            if !present[k] {
                log::warn!("class {k} absent from training labels; its member always predicts negative");
                return Ok(Learner::AlwaysNegative);
            }
            let yk: Vec<f64> = y.iter().map(|&c| f64::from(u8::from(c == k))).collect();
            fit_member(&yk, k)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OvREnsemble { members })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FittedParams {
    Single(Learner),
    Ovr(OvREnsemble),
    /// Multiclass network with a native softmax head.
    Softmax(Mlp),
}

/// Persistable fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub task: Task,
    pub spec: ModelSpec,
    /// Training feature column names, in order.
    pub manifest: Vec<String>,
    pub seed: u64,
    pub n_classes: usize,
    pub standardizer: Option<Standardizer>,
    pub params: FittedParams,
}

fn binary_member(spec: &ModelSpec, x: &[Vec<f64>], y01: &[f64], seed: u64) -> Result<Learner, ModelError> {
    Ok(match spec {
        ModelSpec::Linear(p) => Learner::Logistic(fit_logistic(x, y01, &p.logistic(), seed)?),
        ModelSpec::Cart(p) => Learner::Tree(fit_cart(x, y01, Criterion::Gini, p)?),
        ModelSpec::Svm(p) => {
            let pm: Vec<f64> = y01.iter().map(|&v| if v == 1.0 { 1.0 } else { -1.0 }).collect();
            Learner::Svm(fit_svc(x, &pm, p)?)
        }
        ModelSpec::Forest(p) => Learner::Forest(fit_forest(x, y01, Criterion::Gini, p, seed)?),
        ModelSpec::Gbt(p) => Learner::Gbt(fit_gbt(x, y01, Loss::Logistic, p)?),
        ModelSpec::Mlp(p) => Learner::Mlp(fit_mlp(x, y01, Head::Regression, p, seed)?),
    })
}

fn regressor(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Learner, ModelError> {
    Ok(match spec {
        ModelSpec::Linear(p) => Learner::Linear(fit_linear(x, y, p.ridge)?),
        ModelSpec::Mlp(p) => Learner::Mlp(fit_mlp(x, y, Head::Regression, p, seed)?),
        ModelSpec::Cart(p) => Learner::Tree(fit_cart(x, y, Criterion::Mse, p)?),
        ModelSpec::Svm(p) => Learner::Svm(fit_svr(x, y, p)?),
        ModelSpec::Forest(p) => Learner::Forest(fit_forest(x, y, Criterion::Mse, p, seed)?),
        ModelSpec::Gbt(p) => Learner::Gbt(fit_gbt(x, y, Loss::Squared, p)?),
    })
}

impl TrainedModel {
    /// Fit `spec` on the rows of `x`. Classification targets are class
    /// indices `0..n_classes` stored as floats.
    pub fn fit(
        spec: &ModelSpec,
        task: Task,
        x: &FeatureMatrix,
        y: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if x.n_rows() != y.len() {
            return Err(ModelError::Shape(format!("{} rows but {} targets", x.n_rows(), y.len())));
        }
        if x.n_rows() < 2 {
            return Err(ModelError::TooFewRows(x.n_rows()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Shape(format!("non-finite target at row {i}")));
        }
        let raw: Vec<Vec<f64>> = x.rows().map(<[f64]>::to_vec).collect();
        let standardizer = spec.standardizes().then(|| Standardizer::fit(&raw));
        let rows: Vec<Vec<f64>> = match &standardizer {
            Some(s) => raw.iter().map(|r| s.apply(r)).collect(),
            None => raw,
        };
        let params = match task {
            Task::Regression => FittedParams::Single(regressor(spec, &rows, y, seed)?),
            Task::Classification => {
                let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                if y.iter().zip(&labels).any(|(&v, &l)| v < 0.0 || v != l as f64) {
                    return Err(ModelError::Shape("class labels must be non-negative integers".into()));
                }
                match spec {
                    ModelSpec::Mlp(p) => {
                        if labels.iter().any(|&l| l >= n_classes) {
                            return Err(ModelError::Shape(format!("label outside 0..{n_classes}")));
                        }
                        FittedParams::Softmax(fit_mlp(&rows, y, Head::Softmax { classes: n_classes }, p, seed)?)
                    }
                    _ => FittedParams::Ovr(one_vs_rest(&labels, n_classes, |y01, k| {
                        binary_member(spec, &rows, y01, mix_seed(seed, k as u64))
                    })?),
                }
            }
        };
        Ok(Self {
            format_version: FORMAT_VERSION,
            task,
            spec: spec.clone(),
            manifest: x.names().to_vec(),
            seed,
            n_classes: if task == Task::Classification { n_classes } else { 0 },
            standardizer,
            params,
        })
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        }
    }

    /// Regression value for one raw feature row.
    pub fn predict_value(&self, x: &[f64]) -> f64 {
        let z = self.prepare(x);
        match &self.params {
            FittedParams::Single(l) => l.score(&z),
            FittedParams::Ovr(e) => argmax(&e.scores(&z)) as f64,
            FittedParams::Softmax(m) => argmax(&m.forward(&z)) as f64,
        }
    }

    /// Per-class scores for one raw feature row (member decision values or
    /// probabilities; softmax probabilities for the network).
    pub fn predict_scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.prepare(x);
        match &self.params {
            FittedParams::Single(l) => vec![l.score(&z)],
            FittedParams::Ovr(e) => e.scores(&z),
            FittedParams::Softmax(m) => m.forward(&z),
        }
    }

    /// Predicted class: argmax of [`TrainedModel::predict_scores`], ties to
    /// the lower class.
    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.predict_scores(x))
    }

    /// Check that `x` has the training columns, in order.
    pub fn check_manifest(&self, x: &FeatureMatrix) -> Result<(), ModelError> {
        if x.names() == self.manifest.as_slice() {
            return Ok(());
        }
        if x.n_cols() != self.manifest.len() {
            return Err(ModelError::Manifest(format!("{} columns, model expects {}", x.n_cols(), self.manifest.len())));
        }
        let j = x.names().iter().zip(&self.manifest).position(|(a, b)| a != b).expect("names differ");
        Err(ModelError::Manifest(format!("column {j} is '{}', model expects '{}'", x.names()[j], self.manifest[j])))
    }

    /// Regression predictions for every row, after a manifest check.
    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        self.check_manifest(x)?;
        Ok(x.rows().map(|r| self.predict_value(r)).collect())
    }

    /// Class scores for every row, after a manifest check.
    pub fn scores_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_manifest(x)?;
        Ok(x.rows().map(|r| self.predict_scores(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(ModelError::Version { found: header.format_version, expected: FORMAT_VERSION });
        }
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Load and require the given task.
    pub fn load_for(path: &Path, task: Task) -> Result<Self, ModelError> {
        let m = Self::load(path)?;
        if m.task != task {
            return Err(ModelError::TaskMismatch { found: m.task, expected: task });
        }
        Ok(m)
    }
}
