//! Least-squares / ridge regression and logistic regression.

use super::ModelError;
use crate::rng::rng_from;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Set when an unregularized fit met a rank-deficient design and fell
    /// back to the minimum-norm (pseudo-inverse) solution.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Minimize `||y - Xw - b||^2 + ridge * ||w||^2`; the intercept is not
/// penalized. With `ridge == 0` the system is solved through the SVD
/// pseudo-inverse.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<LinearModel, ModelError> {
    let n = x.len();
    if n < 2 {
        return Err(ModelError::TooFewRows(n));
    }
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if !(ridge >= 0.0) {
        return Err(ModelError::Param(format!("ridge must be >= 0, got {ridge}")));
    }
    let p = x[0].len();
    let xm = column_means(x, p);
    let ym = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - xm[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));

    let mut rank_deficient = false;
    let w: DVector<f64> = if p == 0 {
        DVector::zeros(0)
    } else if ridge > 0.0 {
        let mut a = xc.transpose() * &xc;
        for j in 0..p {
            a[(j, j)] += ridge;
        }
        let b = xc.transpose() * &yc;
        match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.svd(true, true).solve(&b, 0.0).map_err(|e| ModelError::Numerical(e.to_string()))?,
        }
    } else {
        let svd = xc.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let eps = smax * n.max(p) as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        if rank < p {
            rank_deficient = true;
            log::warn!("design matrix has rank {rank} < {p}; using the pseudo-inverse solution");
        }
        svd.solve(&yc, eps).map_err(|e| ModelError::Numerical(e.to_string()))?
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let bias = ym - weights.iter().zip(&xm).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel { weights, bias, rank_deficient })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 200, batch_size: 32, l2: 1e-3 }
    }
}

/// Binary logistic regression (labels 0/1) by mini-batch gradient descent on
/// the mean cross-entropy plus `l2/2 * ||w||^2`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[f64], params: &LogisticParams, seed: u64) -> Result<LinearModel, ModelError> {
    let n = x.len();
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(ModelError::Param("logistic labels must be 0 or 1".into()));
    }
    if pos == 0 || pos == n {
        return Err(ModelError::SingleClass);
    }
    if params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(ModelError::Param("batch_size and learning_rate must be positive".into()));
    }
    let p = x[0].len();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut gw = vec![0.0; p];
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in batch {
                let z = b + w.iter().zip(&x[i]).map(|(a, v)| a * v).sum::<f64>();
                let r = sigmoid(z) - y[i];
                for (g, v) in gw.iter_mut().zip(&x[i]) {
                    *g += r * v;
                }
                gb += r;
            }
            let m = batch.len() as f64;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= params.learning_rate * (g / m + params.l2 * *wj);
            }
            b -= params.learning_rate * gb / m;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(ModelError::Diverged("logistic regression weights became non-finite".into()));
    }
    Ok(LinearModel { weights: w, bias: b, rank_deficient: false })
}
