//! Cluster-based topics: document vectors are projected onto their leading
//! principal components, grouped by k-means, and each cluster's merged text is
//! scored with class-based TF-IDF.

use super::TextRepError;
use crate::rng::{mix_seed, rng_from};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub reduce_dims: usize,
    pub n_clusters: usize,
    /// Members of clusters smaller than this are labeled outliers.
    pub min_cluster_size: usize,
    /// Documents farther from their centroid than this quantile of all
    /// centroid distances are labeled outliers; 1.0 disables the rule.
    pub outlier_quantile: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            reduce_dims: 5,
            n_clusters: 10,
            min_cluster_size: 2,
            outlier_quantile: 0.95,
            restarts: 4,
            max_iter: 100,
            seed: 0,
        }
    }
}

pub const OUTLIER: i64 = -1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopics {
    pub config: ClusterConfig,
    mean: Vec<f64>,
    /// Principal axes, one row per retained component.
    components: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id per fitted document; [`OUTLIER`] for outliers.
    pub labels: Vec<i64>,
    /// c-TF-IDF weight of every vocabulary term in every cluster.
    pub keyword_weights: Vec<Vec<f64>>,
    pub terms: Vec<String>,
    /// Cluster-membership probabilities of the fitted documents.
    pub membership: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Class-based TF-IDF, `X[c][t] = tf[c][t] * ln(1 + A / tf_t)`, where `tf_t` is
/// the term's total count over clusters and `A` the average token count per
/// cluster. Terms absent from every cluster score zero.
pub fn c_tf_idf(term_counts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = term_counts.len();
    if k == 0 {
        return Vec::new();
    }
    let v = term_counts[0].len();
    let totals: Vec<f64> = (0..v).map(|t| term_counts.iter().map(|row| row[t]).sum()).collect();
    let avg = totals.iter().sum::<f64>() / k as f64;
    term_counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&totals)
                .map(|(&tf, &tot)| if tot > 0.0 { tf * (1.0 + avg / tot).ln() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Softmax of negative Euclidean distances to each centroid.
pub fn membership(point: &[f64], centroids: &[Vec<f64>]) -> Vec<f64> {
    let neg: Vec<f64> = centroids.iter().map(|c| -sq_dist(point, c).sqrt()).collect();
    let max = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = neg.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Leading `r` principal axes of centered data, sign-fixed so each axis's
/// largest-magnitude entry is positive.
fn principal_axes(data: &[Vec<f64>], mean: &[f64], r: usize) -> Vec<Vec<f64>> {
    let d = mean.len();
    let n = data.len();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data {
        let c: Vec<f64> = row.iter().zip(mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n.max(2) - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(r)
        .map(|i| {
            let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = axis.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            axis
        })
        .collect()
}

struct KMeans {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    inertia: f64,
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> KMeans {
    let mut rng = rng_from(seed);
    // k-means++ seeding
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            d2.iter().position(|&d| {
                r -= d;
                r < 0.0
            })
            .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            sizes[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            } else {
                // re-seed an empty cluster at the point worst served by its centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty");
                centroids[c] = points[far].clone();
            }
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
    KMeans { centroids, labels, inertia }
}

impl ClusterTopics {
    /// Fit on document vectors (`doc_vectors[i]`) whose vocabulary term ids are
    /// `doc_terms[i]`.
    pub fn fit(
        doc_vectors: &[Vec<f64>],
        doc_terms: &[Vec<usize>],
        terms: &[String],
        config: &ClusterConfig,
    ) -> Result<Self, TextRepError> {
        let n = doc_vectors.len();
        if n == 0 {
            return Err(TextRepError::EmptyCorpus);
        }
        if config.n_clusters == 0 || config.n_clusters > n {
            return Err(TextRepError::Config(format!(
                "{} clusters requested for {n} documents",
                config.n_clusters
            )));
        }
        if doc_terms.len() != n {
            return Err(TextRepError::Config("one term list per document vector required".into()));
        }
        let dim = doc_vectors[0].len();
        let mean: Vec<f64> =
            (0..dim).map(|j| doc_vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let r = config.reduce_dims.clamp(1, dim.max(1));
        let components = principal_axes(doc_vectors, &mean, r);
        let mut model = Self {
            config: config.clone(),
            mean,
            components,
            centroids: Vec::new(),
            labels: Vec::new(),
            keyword_weights: Vec::new(),
            terms: terms.to_vec(),
            membership: Vec::new(),
        };
        let reduced: Vec<Vec<f64>> = doc_vectors.iter().map(|v| model.project(v)).collect();

        let k = config.n_clusters;
        let best = (0..config.restarts.max(1))
            .map(|r| kmeans(&reduced, k, config.max_iter, mix_seed(config.seed, r as u64)))
            .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
            .expect("at least one restart");

        let dists: Vec<f64> =
            reduced.iter().zip(&best.labels).map(|(p, &c)| sq_dist(p, &best.centroids[c]).sqrt()).collect();
        let cutoff = if config.outlier_quantile < 1.0 {
            let mut sorted = dists.clone();
            sorted.sort_by(f64::total_cmp);
            crate::corpus::quantile_sorted(&sorted, config.outlier_quantile.max(0.0))
        } else {
            f64::INFINITY
        };
        let mut sizes = vec![0usize; k];
        for &c in &best.labels {
            sizes[c] += 1;
        }
        model.labels = best
            .labels
            .iter()
            .zip(&dists)
            .map(|(&c, &d)| if d > cutoff || sizes[c] < config.min_cluster_size { OUTLIER } else { c as i64 })
            .collect();

        let mut counts = vec![vec![0.0; terms.len()]; k];
        for (label, doc) in model.labels.iter().zip(doc_terms) {
            if *label >= 0 {
                for &t in doc {
                    counts[*label as usize][t] += 1.0;
                }
            }
        }
        model.keyword_weights = c_tf_idf(&counts);
        model.membership = reduced.iter().map(|p| membership(p, &best.centroids)).collect();
        model.centroids = best.centroids;
        Ok(model)
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|axis| axis.iter().zip(v.iter().zip(&self.mean)).map(|(a, (x, m))| a * (x - m)).sum())
            .collect()
    }

    /// Membership probabilities of (possibly unseen) document vectors.
    pub fn transform(&self, doc_vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
        doc_vectors.iter().map(|v| membership(&self.project(v), &self.centroids)).collect()
    }

    /// Highest-weighted terms of a cluster, ties broken by term order.
    pub fn top_keywords(&self, cluster: usize, n: usize) -> Vec<(String, f64)> {
        let w = &self.keyword_weights[cluster];
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|i| (self.terms[i].clone(), w[i])).collect()
    }
}
