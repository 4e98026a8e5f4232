//! Skip-gram word embeddings trained with negative sampling, and average-pooled
//! document vectors.

use super::vocab::Vocabulary;
use super::TextRepError;
use crate::rng::rng_from;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 100, window: 5, epochs: 5, learning_rate: 0.025, negatives: 5, seed: 0 }
    }
}

/// Input (center) and output (context) vectors for every vocabulary term.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub config: SkipGramConfig,
    terms: Vec<String>,
    index: HashMap<String, usize>,
    input: Vec<f64>,
    output: Vec<f64>,
    /// Mean pair loss of each training epoch.
    pub epoch_losses: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)`, computed without overflow.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of one (center, context) pair's negative-sampling loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGrad {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Loss `-ln σ(u_o·v_c) - Σ_n ln σ(-u_n·v_c)` of one training pair and its
/// gradients with respect to the center vector, the context output vector and
/// each negative output vector. Gradients are written into the buffers.
fn pair_loss_grad(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
    g_center: &mut [f64],
    g_context: &mut [f64],
    g_negatives: &mut [Vec<f64>],
) -> f64 {
    let s = dot(context, center);
    let mut loss = neg_log_sigmoid(s);
    let coef = sigmoid(s) - 1.0;
    for k in 0..center.len() {
        g_center[k] = coef * context[k];
        g_context[k] = coef * center[k];
    }
    for (u, g) in negatives.iter().zip(g_negatives.iter_mut()) {
        let s = dot(u, center);
        loss += neg_log_sigmoid(-s);
        let coef = sigmoid(s);
        for k in 0..center.len() {
            g_center[k] += coef * u[k];
            g[k] = coef * center[k];
        }
    }
    loss
}

/// Analytic gradient of the negative-sampling loss for one pair.
pub fn pair_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGrad {
    let d = center.len();
    let mut g = PairGrad {
        loss: 0.0,
        center: vec![0.0; d],
        context: vec![0.0; d],
        negatives: vec![vec![0.0; d]; negatives.len()],
    };
    g.loss = pair_loss_grad(center, context, negatives, &mut g.center, &mut g.context, &mut g.negatives);
    g
}

/// Sampler over term ids proportional to count^0.75.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c.max(1) as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty vocabulary");
        let r = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1)
    }
}

/// Train skip-gram embeddings over the vocabulary terms of `docs`.
///
/// Every token within `window` positions of a center token is a context. The
/// learning rate decays linearly to 0.01% of its initial value over training.
pub fn train_skipgram(
    docs: &[Vec<String>],
    vocab: &Vocabulary,
    config: &SkipGramConfig,
) -> Result<EmbeddingTable, TextRepError> {
    let v = vocab.len();
    if v < 2 {
        return Err(TextRepError::TooSmall("skip-gram needs at least 2 vocabulary terms".into()));
    }
    let d = config.dim;
    let encoded: Vec<Vec<usize>> = docs.iter().map(|doc| vocab.encode(doc)).collect();
    let pairs_per_epoch: usize = encoded
        .iter()
        .map(|doc| {
            (0..doc.len())
                .map(|t| t.min(config.window) + (doc.len() - 1 - t).min(config.window))
                .sum::<usize>()
        })
        .sum();
    if pairs_per_epoch == 0 {
        return Err(TextRepError::TooSmall("corpus forms no (center, context) pair".into()));
    }

    let mut rng = rng_from(config.seed);
    let mut input: Vec<f64> = (0..v * d).map(|_| (rng.random::<f64>() - 0.5) / d as f64).collect();
    let mut output = vec![0.0; v * d];
    let noise = NoiseTable::new(vocab.counts());

    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut g_center = vec![0.0; d];
    let mut g_context = vec![0.0; d];
    let mut g_neg = vec![vec![0.0; d]; config.negatives];
    let mut neg_ids = vec![0usize; config.negatives];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        for doc in &encoded {
            for t in 0..doc.len() {
                let lo = t.saturating_sub(config.window);
                let hi = (t + config.window).min(doc.len() - 1);
                for c in lo..=hi {
                    if c == t {
                        continue;
                    }
                    let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                    step += 1;
                    let (wi, wo) = (doc[t], doc[c]);
                    for id in neg_ids.iter_mut() {
                        *id = noise.sample(&mut rng);
                    }
                    let loss = {
                        let negs: Vec<&[f64]> = neg_ids.iter().map(|&n| &output[n * d..(n + 1) * d]).collect();
                        pair_loss_grad(
                            &input[wi * d..(wi + 1) * d],
                            &output[wo * d..(wo + 1) * d],
                            &negs,
                            &mut g_center,
                            &mut g_context,
                            &mut g_neg,
                        )
                    };
                    loss_sum += loss;
                    for (p, g) in output[wo * d..(wo + 1) * d].iter_mut().zip(&g_context) {
                        *p -= lr * g;
                    }
                    for (&n, g) in neg_ids.iter().zip(&g_neg) {
                        for (p, gk) in output[n * d..(n + 1) * d].iter_mut().zip(g) {
                            *p -= lr * gk;
                        }
                    }
                    for (p, g) in input[wi * d..(wi + 1) * d].iter_mut().zip(&g_center) {
                        *p -= lr * g;
                    }
                }
            }
        }
        epoch_losses.push(loss_sum / pairs_per_epoch as f64);
    }
    if input.iter().chain(&output).any(|x| !x.is_finite()) {
        return Err(TextRepError::Diverged("skip-gram produced non-finite vectors".into()));
    }
    Ok(EmbeddingTable::from_parts(config.clone(), vocab.terms().to_vec(), input, output, epoch_losses))
}

impl EmbeddingTable {
    /// Panics if the vector buffers do not hold one `dim`-vector per term.
    pub fn from_parts(
        config: SkipGramConfig,
        terms: Vec<String>,
        input: Vec<f64>,
        output: Vec<f64>,
        epoch_losses: Vec<f64>,
    ) -> Self {
        assert_eq!(input.len(), terms.len() * config.dim);
        assert_eq!(output.len(), terms.len() * config.dim);
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { config, terms, index, input, output, epoch_losses }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn input_vector(&self, id: usize) -> &[f64] {
        let d = self.dim();
        &self.input[id * d..(id + 1) * d]
    }

    pub fn output_vector(&self, id: usize) -> &[f64] {
        let d = self.dim();
        &self.output[id * d..(id + 1) * d]
    }

    pub fn vector(&self, term: &str) -> Option<&[f64]> {
        self.id(term).map(|i| self.input_vector(i))
    }

    /// σ(v_center · v'_context): the model's score for a (center, context) pair.
    pub fn pair_score(&self, center: &str, context: &str) -> Option<f64> {
        let (c, o) = (self.id(center)?, self.id(context)?);
        Some(sigmoid(dot(self.input_vector(c), self.output_vector(o))))
    }

    /// Trailing moving average of the per-epoch losses over `window` epochs;
    /// negative sampling makes single epochs noisy.
    pub fn smoothed_losses(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        self.epoch_losses.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect()
    }

    /// Copy with every vector negated.
    pub fn negated(&self) -> Self {
        let mut t = self.clone();
        t.input.iter_mut().chain(t.output.iter_mut()).for_each(|x| *x = -*x);
        t
    }

    /// Versioned text form: a header line, the JSON training config, then an
    /// `[input]` and an `[output]` section with one `term v1 .. vd` line per term.
    pub fn to_text(&self) -> String {
        let mut s = String::from("dataprice-embeddings v1\n");
        let _ = writeln!(s, "{}", serde_json::to_string(&self.config).expect("config serializes"));
        for (section, data) in [("[input]", &self.input), ("[output]", &self.output)] {
            s.push_str(section);
            s.push('\n');
            for (i, t) in self.terms.iter().enumerate() {
                s.push_str(t);
                for x in &data[i * self.dim()..(i + 1) * self.dim()] {
                    let _ = write!(s, " {x:?}");
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TextRepError> {
        let bad = |m: &str| TextRepError::Parse(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("dataprice-embeddings v1") {
            return Err(bad("missing or unsupported embedding header"));
        }
        let config: SkipGramConfig = serde_json::from_str(lines.next().ok_or_else(|| bad("missing config line"))?)
            .map_err(|e| TextRepError::Parse(format!("config: {e}")))?;
        let mut terms = Vec::new();
        let mut sections: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut current: Option<usize> = None;
        for (n, line) in lines.enumerate() {
            match line {
                "[input]" => current = Some(0),
                "[output]" => current = Some(1),
                "" => {}
                _ => {
                    let s = current.ok_or_else(|| bad("vector line before section header"))?;
                    let mut parts = line.split(' ');
                    let term = parts.next().unwrap_or_default();
                    let values = parts
                        .map(str::parse::<f64>)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| TextRepError::Parse(format!("line {}: {e}", n + 3)))?;
                    if values.len() != config.dim {
                        return Err(TextRepError::Parse(format!(
                            "line {}: expected {} values, got {}",
                            n + 3,
                            config.dim,
                            values.len()
                        )));
                    }
                    if s == 0 {
                        terms.push(term.to_string());
                    }
                    sections[s].extend(values);
                }
            }
        }
        let [input, output] = sections;
        if output.len() != input.len() {
            return Err(bad("input and output sections differ in size"));
        }
        Ok(Self::from_parts(config, terms, input, output, Vec::new()))
    }
}

/// Average of the input vectors of the in-vocabulary tokens; zero vector when
/// there are none.
pub fn doc_embedding(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let d = table.dim();
    let mut v = vec![0.0; d];
    let mut n = 0usize;
    for id in tokens.iter().filter_map(|t| table.id(t)) {
        for (a, b) in v.iter_mut().zip(table.input_vector(id)) {
            *a += b;
        }
        n += 1;
    }
    if n > 0 {
        v.iter_mut().for_each(|a| *a /= n as f64);
    }
    v
}
