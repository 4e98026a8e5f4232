//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

use super::TextRepError;
use crate::rng::rng_from;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    /// Document-topic prior; `None` means 50 / K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    /// Gibbs sweeps used to fold in unseen documents.
    pub inference_iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { topics: 10, alpha: None, beta: 0.01, iterations: 1000, inference_iterations: 100, seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }
}

/// Fitted topic model. Rows of `phi` (K x V) and `theta` (N x K) sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub config: LdaConfig,
    pub n_terms: usize,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Final topic assignment of every token, per document.
    pub assignments: Vec<Vec<usize>>,
}

/// Count tables of the collapsed sampler.
struct Counts {
    doc_topic: Vec<Vec<u32>>,
    topic_term: Vec<Vec<u32>>,
    topic_total: Vec<u32>,
}

impl Counts {
    fn total(&self) -> u64 {
        self.topic_total.iter().map(|&c| u64::from(c)).sum()
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        r -= w;
        if r < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

/// Fit LDA on documents given as term-id sequences over a vocabulary of
/// `n_terms` terms.
pub fn train_lda(docs: &[Vec<usize>], n_terms: usize, config: &LdaConfig) -> Result<TopicModel, TextRepError> {
    let k = config.topics;
    if k == 0 {
        return Err(TextRepError::Config("LDA needs at least one topic".into()));
    }
    if docs.is_empty() {
        return Err(TextRepError::EmptyCorpus);
    }
    if k > n_terms {
        return Err(TextRepError::Config(format!("{k} topics exceed vocabulary size {n_terms}")));
    }
    let alpha = config.alpha();
    let beta = config.beta;
    let vbeta = n_terms as f64 * beta;
    let mut rng = rng_from(config.seed);

    let mut counts = Counts {
        doc_topic: vec![vec![0; k]; docs.len()],
        topic_term: vec![vec![0; n_terms]; k],
        topic_total: vec![0; k],
    };
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    counts.doc_topic[d][t] += 1;
                    counts.topic_term[t][w] += 1;
                    counts.topic_total[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let n_tokens: u64 = docs.iter().map(|d| d.len() as u64).sum();

    let mut weights = vec![0.0; k];
    for _ in 0..config.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (n, &w) in doc.iter().enumerate() {
                let old = z[d][n];
                counts.doc_topic[d][old] -= 1;
                counts.topic_term[old][w] -= 1;
                counts.topic_total[old] -= 1;
                for (t, wt) in weights.iter_mut().enumerate() {
                    *wt = (f64::from(counts.doc_topic[d][t]) + alpha)
                        * (f64::from(counts.topic_term[t][w]) + beta)
                        / (f64::from(counts.topic_total[t]) + vbeta);
                }
                let new = sample_categorical(&mut rng, &weights);
                z[d][n] = new;
                counts.doc_topic[d][new] += 1;
                counts.topic_term[new][w] += 1;
                counts.topic_total[new] += 1;
            }
        }
        debug_assert_eq!(counts.total(), n_tokens);
    }

    let phi = (0..k)
        .map(|t| {
            let denom = f64::from(counts.topic_total[t]) + vbeta;
            normalize((0..n_terms).map(|w| (f64::from(counts.topic_term[t][w]) + beta) / denom).collect())
        })
        .collect();
    let theta = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            let denom = doc.len() as f64 + k as f64 * alpha;
            normalize((0..k).map(|t| (f64::from(counts.doc_topic[d][t]) + alpha) / denom).collect())
        })
        .collect();
    Ok(TopicModel { config: config.clone(), n_terms, phi, theta, assignments: std::mem::take(&mut z) })
}

/// Rescale to sum exactly one (up to rounding) so downstream row checks hold.
fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

impl TopicModel {
    pub fn topics(&self) -> usize {
        self.phi.len()
    }

    /// Document-topic proportions of unseen documents, by Gibbs sampling their
    /// assignments with the topic-word distributions held fixed.
    pub fn infer(&self, docs: &[Vec<usize>], seed: u64) -> Vec<Vec<f64>> {
        let k = self.topics();
        let alpha = self.config.alpha();
        let mut rng = rng_from(seed);
        let mut weights = vec![0.0; k];
        docs.iter()
            .map(|doc| {
                let mut dt = vec![0u32; k];
                let mut z: Vec<usize> = doc
                    .iter()
                    .map(|_| {
                        let t = rng.random_range(0..k);
                        dt[t] += 1;
                        t
                    })
                    .collect();
                for _ in 0..self.config.inference_iterations {
                    for (n, &w) in doc.iter().enumerate() {
                        dt[z[n]] -= 1;
                        for (t, wt) in weights.iter_mut().enumerate() {
                            *wt = (f64::from(dt[t]) + alpha) * self.phi[t][w];
                        }
                        z[n] = sample_categorical(&mut rng, &weights);
                        dt[z[n]] += 1;
                    }
                }
                let denom = doc.len() as f64 + k as f64 * alpha;
                normalize(dt.iter().map(|&c| (f64::from(c) + alpha) / denom).collect())
            })
            .collect()
    }
}
