//! Support vector classification and ε-insensitive regression, solved in the
//! dual by sequential minimal optimization with second-order working-set
//! selection over a fully cached kernel matrix.

use super::ModelError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(-gamma ||x - z||^2)`; `None` resolves to 1 / n_features at fit time.
    Rbf { gamma: Option<f64> },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma.unwrap_or(1.0) * d).exp()
            }
        }
    }

    fn resolve(self, n_features: usize) -> Kernel {
        match self {
            Kernel::Rbf { gamma: None } => Kernel::Rbf { gamma: Some(1.0 / n_features.max(1) as f64) },
            k => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// Tube half-width for regression.
    pub epsilon: f64,
    pub kernel: Kernel,
    /// KKT tolerance of the returned solution.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epsilon: 0.1, kernel: Kernel::Rbf { gamma: None }, tol: 1e-3, max_iter: 1_000_000 }
    }
}

/// `f(x) = sum_i coef_i k(sv_i, x) + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// Signed dual coefficients (`y_i alpha_i`, or `alpha_i - alpha_i*` for
    /// regression) of the support vectors.
    pub coef: Vec<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub iterations: usize,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.support_vectors.iter().zip(&self.coef).map(|(sv, c)| c * self.kernel.eval(sv, x)).sum::<f64>()
    }

    /// Primal weight vector; meaningful for the linear kernel only.
    pub fn linear_weights(&self) -> Vec<f64> {
        let d = self.support_vectors.first().map_or(0, Vec::len);
        let mut w = vec![0.0; d];
        for (sv, c) in self.support_vectors.iter().zip(&self.coef) {
            for (wj, v) in w.iter_mut().zip(sv) {
                *wj += c * v;
            }
        }
        w
    }

    /// Signed coefficient of every training row (zero for non-support rows).
    pub fn dense_coef(&self, n_rows: usize) -> Vec<f64> {
        let mut a = vec![0.0; n_rows];
        for (&i, &c) in self.support_indices.iter().zip(&self.coef) {
            a[i] = c;
        }
        a
    }
}

const TAU: f64 = 1e-12;

/// Solver for `min 1/2 a'Qa + p'a` s.t. `y'a = const`, `0 <= a <= C`, where
/// `Q_ij = y_i y_j K(i mod n, j mod n)`.
struct Solver<'a> {
    kernel: &'a [f64],
    n: usize,
    y: Vec<f64>,
    p: Vec<f64>,
    c: f64,
    eps: f64,
    max_iter: usize,
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[(i % self.n) * self.n + j % self.n]
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k(i, j)
    }

    fn solve(&self) -> Solution {
        let l = self.y.len();
        let c = self.c;
        let mut alpha = vec![0.0; l];
        let mut g = self.p.clone();
        let qd: Vec<f64> = (0..l).map(|i| self.k(i, i)).collect();
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;
        let mut iter = 0;
        while iter < self.max_iter {
            // select i maximizing -y_t G_t over the "up" set
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..l {
                if self.y[t] > 0.0 {
                    if !upper(alpha[t]) && -g[t] >= gmax {
                        gmax = -g[t];
                        i = t;
                    }
                } else if !lower(alpha[t]) && g[t] >= gmax {
                    gmax = g[t];
                    i = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best_obj = f64::INFINITY;
            if i != usize::MAX {
                for t in 0..l {
                    let (grad_diff, gv) = if self.y[t] > 0.0 {
                        if lower(alpha[t]) {
                            continue;
                        }
                        (gmax + g[t], g[t])
                    } else {
                        if upper(alpha[t]) {
                            continue;
                        }
                        (gmax - g[t], -g[t])
                    };
                    gmax2 = gmax2.max(gv);
                    if grad_diff > 0.0 {
                        let mut quad = qd[i] + qd[t] - 2.0 * self.k(i, t);
                        if quad <= 0.0 {
                            quad = TAU;
                        }
                        let obj = -(grad_diff * grad_diff) / quad;
                        if obj <= best_obj {
                            best_obj = obj;
                            j = t;
                        }
                    }
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax + gmax2 < self.eps {
                break;
            }
            iter += 1;

            let (old_i, old_j) = (alpha[i], alpha[j]);
            let qij = self.q(i, j);
            if self.y[i] != self.y[j] {
                let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
                let delta = (-g[i] - g[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
                let delta = (g[i] - g[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for (t, gt) in g.iter_mut().enumerate() {
                *gt += self.q(i, t) * di + self.q(j, t) * dj;
            }
        }
        if iter >= self.max_iter {
            log::warn!("SMO stopped at the iteration cap ({}) before reaching tolerance", self.max_iter);
        }

        // rho from free variables, or the midpoint of the feasible interval
        let (mut ub, mut lb, mut sum, mut nfree) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..l {
            let yg = self.y[t] * g[t];
            if upper(alpha[t]) {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if lower(alpha[t]) {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                nfree += 1;
                sum += yg;
            }
        }
        let rho = if nfree > 0 { sum / nfree as f64 } else { (ub + lb) / 2.0 };
        Solution { alpha, rho, iterations: iter }
    }
}

fn kernel_matrix(x: &[Vec<f64>], kernel: &Kernel) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn check(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<(), ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(ModelError::TooFewRows(0));
    }
    if !(params.c > 0.0) {
        return Err(ModelError::Param(format!("C must be positive, got {}", params.c)));
    }
    if !(params.tol > 0.0) {
        return Err(ModelError::Param(format!("tol must be positive, got {}", params.tol)));
    }
    Ok(())
}

fn build(x: &[Vec<f64>], kernel: Kernel, coef_all: Vec<f64>, rho: f64, iterations: usize) -> SvmModel {
    let mut model =
        SvmModel { kernel, support_vectors: Vec::new(), coef: Vec::new(), support_indices: Vec::new(), bias: -rho, iterations };
    for (i, c) in coef_all.into_iter().enumerate() {
        if c != 0.0 {
            model.support_vectors.push(x[i].clone());
            model.coef.push(c);
            model.support_indices.push(i);
        }
    }
    model
}

/// Soft-margin classifier; labels must be -1 or +1.
pub fn fit_svc(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<SvmModel, ModelError> {
    check(x, y, params)?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ModelError::Param("SVM labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(ModelError::SingleClass);
    }
    let kernel = params.kernel.resolve(x[0].len());
    let km = kernel_matrix(x, &kernel);
    let solver = Solver {
        kernel: &km,
        n: x.len(),
        y: y.to_vec(),
        p: vec![-1.0; x.len()],
        c: params.c,
        eps: params.tol / 2.0,
        max_iter: params.max_iter,
    };
    let sol = solver.solve();
    let coef = sol.alpha.iter().zip(y).map(|(a, yi)| a * yi).collect();
    Ok(build(x, kernel, coef, sol.rho, sol.iterations))
}

/// ε-insensitive support vector regression.
pub fn fit_svr(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<SvmModel, ModelError> {
    check(x, y, params)?;
    if !(params.epsilon >= 0.0) {
        return Err(ModelError::Param(format!("epsilon must be >= 0, got {}", params.epsilon)));
    }
    let n = x.len();
    let kernel = params.kernel.resolve(x[0].len());
    let km = kernel_matrix(x, &kernel);
    let mut sign = vec![1.0; n];
    sign.extend(std::iter::repeat_n(-1.0, n));
    let mut p: Vec<f64> = y.iter().map(|v| params.epsilon - v).collect();
    p.extend(y.iter().map(|v| params.epsilon + v));
    let solver = Solver { kernel: &km, n, y: sign, p, c: params.c, eps: params.tol / 2.0, max_iter: params.max_iter };
    let sol = solver.solve();
    let coef = (0..n).map(|i| sol.alpha[i] - sol.alpha[i + n]).collect();
    Ok(build(x, kernel, coef, sol.rho, sol.iterations))
}

/// `max(0, |z| - epsilon)`.
pub fn epsilon_loss(z: f64, epsilon: f64) -> f64 {
    (z.abs() - epsilon).max(0.0)
}

/// Dual objective `sum a - 1/2 sum_ij a_i a_j y_i y_j k_ij` of a classifier.
pub fn svc_dual_objective(x: &[Vec<f64>], y: &[f64], alpha: &[f64], kernel: &Kernel) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval(&x[i], &x[j]);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}
