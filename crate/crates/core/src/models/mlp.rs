//! Fully connected feed-forward network with a linear regression head or a
//! softmax classification head, trained by mini-batch gradient descent.

use super::ModelError;
use crate::rng::rng_from;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => super::linear::sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: vec![32], activation: Activation::Tanh, learning_rate: 0.01, epochs: 200, batch_size: 32 }
    }
}

/// Output head: one linear unit, or `classes` softmax units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Regression,
    Softmax { classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub head: Head,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

struct Trace {
    /// Pre-activations and activations per layer; `acts[0]` is the input.
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(inputs: usize, head: Head, params: &MlpParams, seed: u64) -> Result<Self, ModelError> {
        if params.hidden.is_empty() || params.hidden.contains(&0) {
            return Err(ModelError::Param("MLP needs at least one nonempty hidden layer".into()));
        }
        let outputs = match head {
            Head::Regression => 1,
            Head::Softmax { classes } if classes >= 2 => classes,
            Head::Softmax { classes } => return Err(ModelError::Param(format!("softmax head with {classes} classes"))),
        };
        let mut rng = rng_from(seed);
        let mut sizes = vec![inputs];
        sizes.extend(&params.hidden);
        sizes.push(outputs);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
                    biases: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self { layers, activation: params.activation, head })
    }

    fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = acts.last().expect("input pushed");
            let z: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    layer.biases[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let a = if l < last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                match self.head {
                    Head::Regression => z.clone(),
                    Head::Softmax { .. } => softmax(&z),
                }
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { pre, acts }
    }

    /// Network output: a single value for regression, class probabilities for
    /// the softmax head.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).acts.pop().expect("output layer")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All weights and biases, layer by layer (weights first).
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = it.next().expect("length checked"));
        }
    }

    /// Mean loss over a batch and its gradient in [`Mlp::params`] order. Loss
    /// is half squared error for regression and cross-entropy for softmax,
    /// with class labels given as `0.0, 1.0, ...`.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()])).collect();
        let mut loss = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let tr = self.forward_trace(x);
            let out = tr.acts.last().expect("output");
            // dL/dz at the output layer
            let mut delta: Vec<f64> = match self.head {
                Head::Regression => {
                    let r = out[0] - y;
                    loss += 0.5 * r * r;
                    vec![r]
                }
                Head::Softmax { .. } => {
                    let c = y as usize;
                    loss -= out[c].max(f64::MIN_POSITIVE).ln();
                    out.iter().enumerate().map(|(k, &p)| p - f64::from(u8::from(k == c))).collect()
                }
            };
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &tr.acts[l];
                let (gw, gb) = &mut grads[l];
                for o in 0..layer.outputs {
                    gb[o] += delta[o];
                    for i in 0..layer.inputs {
                        gw[o * layer.inputs + i] += delta[o] * input[i];
                    }
                }
                if l > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let back: f64 = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + i] * delta[o]).sum();
                            back * self.activation.derivative(tr.pre[l - 1][i], input[i])
                        })
                        .collect();
                }
            }
        }
        let m = xs.len().max(1) as f64;
        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).map(|g| g / m).collect();
        (loss / m, flat)
    }
}

/// Train by shuffled mini-batch gradient descent with a fixed learning rate.
pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], head: Head, params: &MlpParams, seed: u64) -> Result<Mlp, ModelError> {
    let n = x.len();
    if n == 0 {
        return Err(ModelError::TooFewRows(0));
    }
    if y.len() != n {
        return Err(ModelError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(ModelError::Param("batch_size and learning_rate must be positive".into()));
    }
    let mut net = Mlp::new(x[0].len(), head, params, seed)?;
    let mut rng = rng_from(crate::rng::mix_seed(seed, 1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut p = net.params();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(params.batch_size).enumerate() {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| x[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let (loss, g) = net.loss_and_gradient(&xs, &ys);
            if !loss.is_finite() {
                return Err(ModelError::Diverged(format!(
                    "MLP loss became {loss} at epoch {epoch}, batch {b} (learning rate {})",
                    params.learning_rate
                )));
            }
            for (v, gv) in p.iter_mut().zip(&g) {
                *v -= params.learning_rate * gv;
            }
            net.set_params(&p);
        }
    }
    Ok(net)
}
