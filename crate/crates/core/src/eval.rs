//! k-fold cross-validation, regression and classification metrics, the
//! representation x model experiment grid and mRMR feature-count curves.

use crate::corpus::{compose_text, structured_matrix, DataProduct, Targets};
use crate::featsel::{discretize_target, mrmr_select, SelectionTrace, DEFAULT_BINS};
use crate::matrix::{csv_field, FeatureMatrix};
use crate::models::{ModelSpec, TrainedModel};
use crate::rng::{mix_path, mix_seed, rng_from};
use crate::textrep::{tokenize, FittedText, Representation, TextRepConfig};
use crate::Task;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot split {n} rows into {k} folds")]
    TooFewRows { n: usize, k: usize },
    #[error("length mismatch: {0}")]
    Shape(String),
    #[error("MAPE undefined: target at index {0} is zero")]
    ZeroTarget(usize),
    #[error("{0}")]
    Undefined(String),
    #[error("{0}")]
    Config(String),
}

/// Fold index of every row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

/// Shuffle rows with `seed`, then deal them to folds round-robin.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewRows { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let mut fold_of = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    Ok(FoldPlan { k, fold_of, seed })
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Rmse,
    Mape,
    Accuracy,
    Auc,
    F1,
}

impl Metric {
    pub fn for_task(task: Task) -> [Metric; 3] {
        match task {
            Task::Regression => [Metric::Mse, Metric::Rmse, Metric::Mape],
            Task::Classification => [Metric::Accuracy, Metric::Auc, Metric::F1],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mse => "MSE",
            Metric::Rmse => "RMSE",
            Metric::Mape => "MAPE",
            Metric::Accuracy => "Accuracy",
            Metric::Auc => "AUC",
            Metric::F1 => "F1-Score",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Mse | Metric::Rmse | Metric::Mape)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub rmse: f64,
    /// `None` when some target is zero.
    pub mape: Option<f64>,
}

fn same_len(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::Shape(format!("{a} targets vs {b} predictions")));
    }
    if a == 0 {
        return Err(EvalError::Shape("no rows to score".into()));
    }
    Ok(())
}

/// Mean absolute percentage error `mean(|y - yhat| / y)`, as printed; a
/// negative target gives a negative term.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64, EvalError> {
    same_len(y.len(), yhat.len())?;
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(EvalError::ZeroTarget(i));
    }
    Ok(y.iter().zip(yhat).map(|(t, p)| (t - p).abs() / t).sum::<f64>() / y.len() as f64)
}

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<RegressionMetrics, EvalError> {
    same_len(y.len(), yhat.len())?;
    let mse = y.iter().zip(yhat).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / y.len() as f64;
    Ok(RegressionMetrics { mse, rmse: mse.sqrt(), mape: mape(y, yhat).ok() })
}

/// One-vs-rest AUC of `scores` for `positive` rows: Mann-Whitney statistic
/// with midranks, so tied scores earn half credit. `None` without both
/// positives and negatives.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&r| positive[r]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Macro AUC over the classes present in `y` (that also have negatives).
pub fn macro_auc(y: &[usize], scores: &[Vec<f64>]) -> Result<f64, EvalError> {
    same_len(y.len(), scores.len())?;
    let k = scores[0].len();
    if scores.iter().any(|s| s.len() != k) || y.iter().any(|&c| c >= k) {
        return Err(EvalError::Shape(format!("score rows must all have {k} classes covering every label")));
    }
    let mut present: Vec<usize> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    let aucs: Vec<f64> = present
        .iter()
        .filter_map(|&c| {
            let pos: Vec<bool> = y.iter().map(|&v| v == c).collect();
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            binary_auc(&pos, &col)
        })
        .collect();
    if aucs.is_empty() {
        return Err(EvalError::Undefined("AUC needs at least two classes in the labels".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// F1 of one class; 0 when precision or recall is undefined or both are 0.
pub fn class_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// Macro F1 over the classes appearing in the labels or the predictions.
pub fn macro_f1(y: &[usize], pred: &[usize]) -> Result<f64, EvalError> {
    same_len(y.len(), pred.len())?;
    let mut classes: Vec<usize> = y.iter().chain(pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let tp = y.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count();
            let fp = y.iter().zip(pred).filter(|(&t, &p)| t != c && p == c).count();
            let fn_ = y.iter().zip(pred).filter(|(&t, &p)| t == c && p != c).count();
            class_f1(tp, fp, fn_)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
}

pub fn classification_metrics(y: &[usize], scores: &[Vec<f64>], pred: &[usize]) -> Result<ClassificationMetrics, EvalError> {
    same_len(y.len(), pred.len())?;
    let accuracy = y.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    Ok(ClassificationMetrics { accuracy, auc: macro_auc(y, scores)?, f1: macro_f1(y, pred)? })
}

/// Metric values of one held-out fold, in [`Metric::for_task`] order.
fn score_fold(model: &TrainedModel, x: &FeatureMatrix, y: &[f64]) -> Result<[Option<f64>; 3], String> {
    match model.task {
        Task::Regression => {
            let pred = model.predict_matrix(x).map_err(|e| e.to_string())?;
            let m = regression_metrics(y, &pred).map_err(|e| e.to_string())?;
            Ok([Some(m.mse), Some(m.rmse), m.mape])
        }
        Task::Classification => {
            let scores = model.scores_matrix(x).map_err(|e| e.to_string())?;
            let pred: Vec<usize> = scores.iter().map(|s| crate::models::argmax(s)).collect();
            let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
            let acc = labels.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
            Ok([Some(acc), macro_auc(&labels, &scores).ok(), macro_f1(&labels, &pred).ok()])
        }
    }
}

/// Train and test matrices of one fold.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

fn mean_over_folds(per_fold: &[[Option<f64>; 3]]) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    for (m, slot) in out.iter_mut().enumerate() {
        let vals: Option<Vec<f64>> = per_fold.iter().map(|f| f[m]).collect();
        *slot = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
    }
    out
}

/// Fit on each fold's training rows and score its test rows; metrics are
/// averaged over folds. A metric undefined on any fold is `None`.
pub fn evaluate_folds(
    folds: &[FoldData],
    y: &[f64],
    spec: &ModelSpec,
    task: Task,
    n_classes: usize,
    seed_of_fold: impl Fn(usize) -> u64 + Sync,
) -> Result<[Option<f64>; 3], String> {
    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(f, fd)| {
            let ytr: Vec<f64> = fd.train_rows.iter().map(|&i| y[i]).collect();
            let yte: Vec<f64> = fd.test_rows.iter().map(|&i| y[i]).collect();
            let model = TrainedModel::fit(spec, task, &fd.train, &ytr, n_classes, seed_of_fold(f))
                .map_err(|e| format!("fold {f}: {e}"))?;
            score_fold(&model, &fd.test, &yte).map_err(|e| format!("fold {f}: {e}"))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(mean_over_folds(&per_fold))
}

/// Folds over a ready feature matrix.
pub fn matrix_folds(x: &FeatureMatrix, plan: &FoldPlan) -> Vec<FoldData> {
    (0..plan.k)
        .map(|f| {
            let train_rows = plan.train_rows(f);
            let test_rows = plan.test_rows(f);
            FoldData { train: x.select_rows(&train_rows), test: x.select_rows(&test_rows), train_rows, test_rows }
        })
        .collect()
}

/// Number of classes implied by integer targets.
pub fn n_classes_of(y: &[f64], task: Task) -> usize {
    match task {
        Task::Regression => 0,
        Task::Classification => y.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub folds: usize,
    pub textrep: TextRepConfig,
    /// Append the structured attributes (and industry scores) to the text
    /// features.
    pub structured: bool,
    /// Keep only the top-m mRMR features, selected on each training fold.
    pub mrmr_top: Option<usize>,
    pub mrmr_bins: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { folds: 5, textrep: TextRepConfig::default(), structured: true, mrmr_top: None, mrmr_bins: DEFAULT_BINS }
    }
}

/// Tokenized product texts.
pub fn product_docs(products: &[DataProduct]) -> Vec<Vec<String>> {
    products.iter().map(|p| tokenize(&compose_text(p))).collect()
}

/// Inputs shared by every cell of a grid or curve.
pub struct Dataset<'a> {
    pub docs: Vec<Vec<String>>,
    pub structured: Option<FeatureMatrix>,
    pub y: Vec<f64>,
    pub task: Task,
    pub n_classes: usize,
    /// Externally supplied document vectors for the cluster-topic
    /// representation, one per product.
    pub doc_vectors: Option<&'a [Vec<f64>]>,
}

impl<'a> Dataset<'a> {
    pub fn new(products: &[DataProduct], targets: &Targets, config: &GridConfig) -> Result<Self, EvalError> {
        if products.len() != targets.len() {
            return Err(EvalError::Shape(format!("{} products vs {} targets", products.len(), targets.len())));
        }
        let structured = if config.structured {
            Some(structured_matrix(products).map_err(|e| EvalError::Config(e.to_string()))?)
        } else {
            None
        };
        let task = targets.task();
        let y = targets.as_f64();
        let n_classes = match targets {
            Targets::Tiers { .. } => 5,
            Targets::Continuous(_) => 0,
        };
        Ok(Self { docs: product_docs(products), structured, y, task, n_classes, doc_vectors: None })
    }

    pub fn with_doc_vectors(mut self, v: &'a [Vec<f64>]) -> Self {
        self.doc_vectors = Some(v);
        self
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Featurize one fold: every text model is fitted on the training rows
    /// only, then applied to the test rows.
    pub fn fold_data(
        &self,
        rep: Representation,
        plan: &FoldPlan,
        fold: usize,
        config: &GridConfig,
        seed: u64,
    ) -> Result<(FoldData, FittedText), String> {
        let train_rows = plan.train_rows(fold);
        let test_rows = plan.test_rows(fold);
        let pick = |rows: &[usize]| rows.iter().map(|&i| self.docs[i].clone()).collect::<Vec<_>>();
        let pick_vec =
            |rows: &[usize]| self.doc_vectors.map(|v| rows.iter().map(|&i| v[i].clone()).collect::<Vec<_>>());
        let (train_docs, test_docs) = (pick(&train_rows), pick(&test_rows));
        let (train_vec, test_vec) = (pick_vec(&train_rows), pick_vec(&test_rows));
        let (fitted, mut train) = FittedText::fit(rep, &train_docs, &config.textrep, seed, train_vec.as_deref())
            .map_err(|e| format!("fold {fold}: {e}"))?;
        let mut test = fitted.transform(&test_docs, test_vec.as_deref()).map_err(|e| format!("fold {fold}: {e}"))?;
        if let Some(s) = &self.structured {
            train = s.select_rows(&train_rows).hstack(&train).map_err(|e| e.to_string())?;
            test = s.select_rows(&test_rows).hstack(&test).map_err(|e| e.to_string())?;
        }
        Ok((FoldData { train_rows, test_rows, train, test }, fitted))
    }
}

/// Restrict a fold to the `m` best mRMR columns of its training rows; columns
/// keep their original order.
pub fn select_fold(fd: &FoldData, y: &[f64], task: Task, m: usize, bins: usize) -> Result<(FoldData, SelectionTrace), String> {
    let ytr: Vec<f64> = fd.train_rows.iter().map(|&i| y[i]).collect();
    let target = discretize_target(&ytr, task).map_err(|e| e.to_string())?;
    let trace = mrmr_select(&fd.train, &target, m, bins).map_err(|e| e.to_string())?;
    let mut cols = trace.selected();
    cols.sort_unstable();
    Ok((
        FoldData {
            train_rows: fd.train_rows.clone(),
            test_rows: fd.test_rows.clone(),
            train: fd.train.select_columns(&cols),
            test: fd.test.select_columns(&cols),
        },
        trace,
    ))
}

/// Seed of model fits for (representation, family, fold).
fn model_seed(seed: u64, rep: Representation, spec: &ModelSpec, fold: usize) -> u64 {
    mix_path(seed, &[2, rep as u64, spec.family() as u64, fold as u64])
}

fn feature_seed(seed: u64, rep: Representation, fold: usize) -> u64 {
    mix_path(seed, &[1, rep as u64, fold as u64])
}

/// Per-cell metrics of the representation x model grid, their per-row means
/// (ME for error metrics, MR for score metrics) and ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: Task,
    pub methods: Vec<String>,
    pub models: Vec<String>,
    pub metrics: Vec<Metric>,
    /// `values[metric][method][model]`; `None` for failed or undefined cells.
    pub values: Vec<Vec<Vec<Option<f64>>>>,
    /// `means[metric][method]` over that row's available model cells.
    pub means: Vec<Vec<Option<f64>>>,
    /// `ranks[metric][method]`, 1 = best.
    pub ranks: Vec<Vec<usize>>,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

/// Ranks 1..=n by mean (ascending when lower is better); missing means rank
/// last; ties go to the earlier row.
pub fn rank_rows(means: &[Option<f64>], lower_is_better: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = match (means[a], means[b]) {
            (Some(x), Some(y)) => {
                if lower_is_better {
                    x.total_cmp(&y)
                } else {
                    y.total_cmp(&x)
                }
            }
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        ord.then(a.cmp(&b))
    });
    let mut ranks = vec![0; means.len()];
    for (pos, &row) in order.iter().enumerate() {
        ranks[row] = pos + 1;
    }
    ranks
}

impl ExperimentReport {
    /// Assemble from `cells[method][model]` fold-averaged metrics.
    pub fn assemble(
        task: Task,
        methods: Vec<String>,
        models: Vec<String>,
        cells: &[Vec<[Option<f64>; 3]>],
        failures: Vec<String>,
        notes: Vec<String>,
    ) -> Self {
        let metrics = Metric::for_task(task).to_vec();
        let values: Vec<Vec<Vec<Option<f64>>>> =
            (0..3).map(|m| cells.iter().map(|row| row.iter().map(|c| c[m]).collect()).collect()).collect();
        let means: Vec<Vec<Option<f64>>> = values
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|row| {
                        let v: Vec<f64> = row.iter().flatten().copied().collect();
                        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                    })
                    .collect()
            })
            .collect();
        let ranks = metrics.iter().zip(&means).map(|(m, mm)| rank_rows(mm, m.lower_is_better())).collect();
        Self { task, methods, models, metrics, values, means, ranks, failures, notes }
    }

    fn mean_label(&self) -> &'static str {
        match self.task {
            Task::Regression => "ME",
            Task::Classification => "MR",
        }
    }

    /// Aligned text table: one block per metric, methods as rows, models as
    /// columns, then the mean and rank columns.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let w0 = self.methods.iter().map(String::len).chain([6]).max().unwrap_or(6) + 2;
        let w = 10;
        let mut header = format!("{:<w0$}", "Method");
        for m in &self.models {
            let _ = write!(header, "{m:>w$}");
        }
        let _ = write!(header, "{:>w$}{:>6}", self.mean_label(), "Rank");
        let rule = "-".repeat(header.len());
        let title = match self.task {
            Task::Regression => "Regression results",
            Task::Classification => "Classification results",
        };
        let mut s = format!("{title}\n{rule}\n{header}\n{rule}\n");
        for (mi, metric) in self.metrics.iter().enumerate() {
            let label = metric.label();
            let pad = (header.len().saturating_sub(label.len())) / 2;
            let _ = writeln!(s, "{}{label}", " ".repeat(pad));
            for (r, method) in self.methods.iter().enumerate() {
                let _ = write!(s, "{method:<w0$}");
                for v in &self.values[mi][r] {
                    let _ = write!(s, "{:>w$}", fmt(*v));
                }
                let _ = writeln!(s, "{:>w$}{:>6}", fmt(self.means[mi][r]), self.ranks[mi][r]);
            }
            let _ = writeln!(s, "{rule}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        for f in &self.failures {
            let _ = writeln!(s, "failed: {f}");
        }
        s
    }

    /// Wide CSV: `metric,method,<models...>,ME|MR,rank`.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10}"));
        let mut s = String::from("metric,method");
        for m in &self.models {
            s.push(',');
            s.push_str(&csv_field(m));
        }
        let _ = writeln!(s, ",{},rank", self.mean_label());
        for (mi, metric) in self.metrics.iter().enumerate() {
            for (r, method) in self.methods.iter().enumerate() {
                let _ = write!(s, "{},{}", metric.label(), csv_field(method));
                for v in &self.values[mi][r] {
                    let _ = write!(s, ",{}", cell(*v));
                }
                let _ = writeln!(s, ",{},{}", cell(self.means[mi][r]), self.ranks[mi][r]);
            }
        }
        s
    }
}

/// Cross-validate every (representation, model) pair. Featurization is
/// fitted per training fold; cell failures are recorded in the report and the
/// grid continues.
pub fn run_grid(
    data: &Dataset<'_>,
    reps: &[Representation],
    specs: &[ModelSpec],
    config: &GridConfig,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    if reps.is_empty() || specs.is_empty() {
        return Err(EvalError::Config("the grid needs at least one representation and one model".into()));
    }
    let plan = kfold_split(data.len(), config.folds, mix_seed(seed, 0))?;
    let units: Vec<(usize, usize)> = (0..reps.len()).flat_map(|r| (0..plan.k).map(move |f| (r, f))).collect();
    let featurized: Vec<Result<FoldData, String>> = units
        .par_iter()
        .map(|&(r, f)| {
            let (fd, _) = data.fold_data(reps[r], &plan, f, config, feature_seed(seed, reps[r], f))?;
            match config.mrmr_top {
                Some(m) => select_fold(&fd, &data.y, data.task, m, config.mrmr_bins).map(|(fd, _)| fd),
                None => Ok(fd),
            }
        })
        .collect();

    let cell_ids: Vec<(usize, usize)> = (0..reps.len()).flat_map(|r| (0..specs.len()).map(move |s| (r, s))).collect();
    let results: Vec<Result<[Option<f64>; 3], String>> = cell_ids
        .par_iter()
        .map(|&(r, s)| {
            let folds: Vec<FoldData> = featurized[r * plan.k..(r + 1) * plan.k]
                .iter()
                .map(|fd| fd.clone())
                .collect::<Result<_, _>>()?;
            evaluate_folds(&folds, &data.y, &specs[s], data.task, data.n_classes, |f| {
                model_seed(seed, reps[r], &specs[s], f)
            })
        })
        .collect();

    let mut failures = Vec::new();
    let mut cells = vec![vec![[None; 3]; specs.len()]; reps.len()];
    for (&(r, s), res) in cell_ids.iter().zip(results) {
        match res {
            Ok(v) => cells[r][s] = v,
            Err(e) => failures.push(format!("{} x {}: {e}", reps[r].display_name(), specs[s].family().display_name(data.task))),
        }
    }
    let mut notes = vec![format!("{}-fold cross-validation; featurization fitted on training folds only", plan.k)];
    if data.task == Task::Regression {
        notes.push("regression metrics are computed on ln(price)".into());
    }
    if let Some(m) = config.mrmr_top {
        notes.push(format!("top {m} mRMR features selected per training fold"));
    }
    Ok(ExperimentReport::assemble(
        data.task,
        reps.iter().map(|r| r.display_name().to_string()).collect(),
        specs.iter().map(|s| s.family().display_name(data.task).to_string()).collect(),
        &cells,
        failures,
        notes,
    ))
}

/// Metrics against the number of mRMR-selected features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub task: Task,
    pub metrics: Vec<Metric>,
    /// `(m, metric values)` per requested feature count.
    pub rows: Vec<(usize, [Option<f64>; 3])>,
    /// Selection trace of each training fold at the largest m.
    pub traces: Vec<SelectionTrace>,
}

impl CurveTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m");
        for m in &self.metrics {
            s.push(',');
            s.push_str(m.label());
        }
        s.push('\n');
        for (m, vals) in &self.rows {
            let _ = write!(s, "{m}");
            for v in vals {
                let _ = write!(s, ",{}", v.map_or(String::new(), |x| format!("{x:.10}")));
            }
            s.push('\n');
        }
        s
    }

    /// Values of one metric, in row order.
    pub fn series(&self, metric: Metric) -> Vec<Option<f64>> {
        let i = self.metrics.iter().position(|&m| m == metric).expect("metric of this task");
        self.rows.iter().map(|(_, v)| v[i]).collect()
    }
}

/// Curve over prepared folds. The mRMR trace of each training fold is
/// computed once at the largest m; smaller m use its prefix.
pub fn curve_from_folds(
    folds: &[FoldData],
    y: &[f64],
    task: Task,
    n_classes: usize,
    spec: &ModelSpec,
    m_values: &[usize],
    bins: usize,
    seed_of_fold: impl Fn(usize) -> u64 + Sync,
) -> Result<CurveTable, EvalError> {
    if m_values.is_empty() || m_values.windows(2).any(|w| w[0] >= w[1]) || m_values[0] == 0 {
        return Err(EvalError::Config("m values must be positive and strictly ascending".into()));
    }
    let n_features = folds.first().map_or(0, |f| f.train.n_cols());
    let max_m = *m_values.last().expect("nonempty");
    if max_m > n_features {
        log::warn!("feature counts above {n_features} are clamped");
    }
    let traces: Vec<SelectionTrace> = folds
        .par_iter()
        .map(|fd| {
            let ytr: Vec<f64> = fd.train_rows.iter().map(|&i| y[i]).collect();
            let target = discretize_target(&ytr, task).map_err(|e| e.to_string())?;
            mrmr_select(&fd.train, &target, max_m.min(n_features), bins).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()
        .map_err(EvalError::Undefined)?;
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for &m in m_values {
        let m = m.min(n_features);
        if seen.contains(&m) {
            continue;
        }
        seen.push(m);
        let sub: Vec<FoldData> = folds
            .iter()
            .zip(&traces)
            .map(|(fd, t)| {
                let mut cols: Vec<usize> = t.selected()[..m].to_vec();
                cols.sort_unstable();
                FoldData {
                    train_rows: fd.train_rows.clone(),
                    test_rows: fd.test_rows.clone(),
                    train: fd.train.select_columns(&cols),
                    test: fd.test.select_columns(&cols),
                }
            })
            .collect();
        let vals = evaluate_folds(&sub, y, spec, task, n_classes, &seed_of_fold).map_err(EvalError::Undefined)?;
        rows.push((m, vals));
    }
    Ok(CurveTable { task, metrics: Metric::for_task(task).to_vec(), rows, traces })
}

/// Feature-count curve for one representation and model on product data.
/// Seeds match [`run_grid`], so the curve point selecting every feature
/// equals the corresponding grid cell.
pub fn feature_curve(
    data: &Dataset<'_>,
    rep: Representation,
    spec: &ModelSpec,
    m_values: &[usize],
    config: &GridConfig,
    seed: u64,
) -> Result<CurveTable, EvalError> {
    let plan = kfold_split(data.len(), config.folds, mix_seed(seed, 0))?;
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|f| data.fold_data(rep, &plan, f, config, feature_seed(seed, rep, f)).map(|(fd, _)| fd))
        .collect::<Result<Vec<_>, String>>()
        .map_err(EvalError::Undefined)?;
    curve_from_folds(&folds, &data.y, data.task, data.n_classes, spec, m_values, config.mrmr_bins, |f| {
        model_seed(seed, rep, spec, f)
    })
}

/// Cross-validated metrics of one model on a ready matrix.
pub fn cross_validate(
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    spec: &ModelSpec,
    k: usize,
    seed: u64,
) -> Result<[Option<f64>; 3], EvalError> {
    let plan = kfold_split(x.n_rows(), k, mix_seed(seed, 0))?;
    let folds = matrix_folds(x, &plan);
    evaluate_folds(&folds, y, spec, task, n_classes_of(y, task), |f| mix_path(seed, &[2, f as u64]))
        .map_err(EvalError::Undefined)
}

/// Feature-count curve on a ready matrix.
pub fn matrix_curve(
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    spec: &ModelSpec,
    m_values: &[usize],
    k: usize,
    seed: u64,
) -> Result<CurveTable, EvalError> {
    let plan = kfold_split(x.n_rows(), k, mix_seed(seed, 0))?;
    let folds = matrix_folds(x, &plan);
    curve_from_folds(&folds, y, task, n_classes_of(y, task), spec, m_values, DEFAULT_BINS, |f| {
        mix_path(seed, &[2, f as u64])
    })
}
