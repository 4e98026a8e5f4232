//! Text feature representations: bag-of-words, TF-IDF, averaged skip-gram
//! embeddings, LDA topic proportions and cluster-based topics.

pub mod cluster;
pub mod lda;
pub mod skipgram;
pub mod tokenize;
pub mod vocab;

pub use cluster::{c_tf_idf, ClusterConfig, ClusterTopics};
pub use lda::{train_lda, LdaConfig, TopicModel};
pub use skipgram::{doc_embedding, pair_gradient, train_skipgram, EmbeddingTable, PairGrad, SkipGramConfig};
pub use tokenize::{tokenize, STOPWORDS_VERSION};
pub use vocab::{bow, tfidf, Vocabulary, DEFAULT_MAX_TERMS};

use crate::matrix::{FeatureMatrix, Provenance};
use crate::rng::mix_seed;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextRepError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus too small: {0}")]
    TooSmall(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

/// The five text representations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Bow,
    Tfidf,
    Word2vec,
    Lda,
    Bertopic,
}

impl Representation {
    pub const ALL: [Representation; 5] =
        [Representation::Bow, Representation::Tfidf, Representation::Word2vec, Representation::Lda, Representation::Bertopic];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Bow => "bow",
            Representation::Tfidf => "tfidf",
            Representation::Word2vec => "word2vec",
            Representation::Lda => "lda",
            Representation::Bertopic => "bertopic",
        }
    }

    /// Row label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Representation::Bow => "BOW",
            Representation::Tfidf => "TFIDF",
            Representation::Word2vec => "Word2vec",
            Representation::Lda => "LDA",
            Representation::Bertopic => "BERTopic",
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown representation '{s}'"))
    }
}

/// Hyperparameters of every representation. Seeds inside the nested configs
/// are ignored by [`FittedText::fit`], which derives them from its own seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextRepConfig {
    pub max_terms: usize,
    pub skipgram: SkipGramConfig,
    pub lda: LdaConfig,
    pub cluster: ClusterConfig,
}

impl Default for TextRepConfig {
    fn default() -> Self {
        Self {
            max_terms: DEFAULT_MAX_TERMS,
            skipgram: SkipGramConfig::default(),
            lda: LdaConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax_topic(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Document-topic proportions as features, one column per topic.
pub fn lda_features(theta: &[Vec<f64>]) -> FeatureMatrix {
    let k = theta.first().map_or(0, Vec::len);
    let names = (0..k).map(|t| format!("lda_topic_{t}")).collect();
    FeatureMatrix::from_rows_named(theta, names, Provenance::Lda)
}

/// Cluster-membership probabilities followed by the most probable cluster id.
pub fn cluster_features(membership: &[Vec<f64>]) -> FeatureMatrix {
    let k = membership.first().map_or(0, Vec::len);
    let mut names: Vec<String> = (0..k).map(|t| format!("bertopic_topic_{t}")).collect();
    names.push("bertopic_topic_id".into());
    let rows: Vec<Vec<f64>> = membership
        .iter()
        .map(|p| {
            let mut r = p.clone();
            r.push(argmax_topic(p) as f64);
            r
        })
        .collect();
    FeatureMatrix::from_rows_named(&rows, names, Provenance::Bertopic)
}

pub fn embedding_features(docs: &[Vec<String>], table: &EmbeddingTable) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = docs.iter().map(|d| doc_embedding(d, table)).collect();
    let names = (0..table.dim()).map(|j| format!("embedding_{j}")).collect();
    FeatureMatrix::from_rows_named(&rows, names, Provenance::Word2vec)
}

/// Document vectors from a headerless or headed CSV of floats, one row per
/// document. A first row that does not parse as numbers is treated as a header.
pub fn load_doc_vectors_csv(path: &Path) -> Result<Vec<Vec<f64>>, TextRepError> {
    let text = std::fs::read_to_string(path).map_err(|e| TextRepError::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if n == 0 => continue,
            Err(e) => return Err(TextRepError::Parse(format!("line {}: {e}", n + 1))),
        }
    }
    if let Some(first) = rows.first() {
        let d = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(TextRepError::Parse(format!("row {} has {} values, expected {d}", i + 1, rows[i].len())));
        }
    }
    Ok(rows)
}

/// A representation fitted on training documents, able to featurize unseen
/// documents with the same vocabulary and models.
#[derive(Clone, Debug)]
pub enum FittedText {
    Bow(Vocabulary),
    Tfidf(Vocabulary),
    Word2vec { vocab: Vocabulary, table: EmbeddingTable },
    Lda { vocab: Vocabulary, model: TopicModel, infer_seed: u64 },
    Bertopic { vocab: Vocabulary, table: Option<EmbeddingTable>, topics: ClusterTopics },
}

impl FittedText {
    /// Fit on tokenized training documents; returns the fitted state and the
    /// training feature matrix. `doc_vectors`, when given, replaces averaged
    /// skip-gram embeddings as the input of the cluster-topic representation.
    pub fn fit(
        rep: Representation,
        docs: &[Vec<String>],
        config: &TextRepConfig,
        seed: u64,
        doc_vectors: Option<&[Vec<f64>]>,
    ) -> Result<(FittedText, FeatureMatrix), TextRepError> {
        let vocab = Vocabulary::build(docs, config.max_terms)?;
        let skipgram = || SkipGramConfig { seed: mix_seed(seed, 1), ..config.skipgram.clone() };
        Ok(match rep {
            Representation::Bow => {
                let m = bow(docs, &vocab);
                (FittedText::Bow(vocab), m)
            }
            Representation::Tfidf => {
                let m = tfidf(docs, &vocab);
                (FittedText::Tfidf(vocab), m)
            }
            Representation::Word2vec => {
                let table = train_skipgram(docs, &vocab, &skipgram())?;
                let m = embedding_features(docs, &table);
                (FittedText::Word2vec { vocab, table }, m)
            }
            Representation::Lda => {
                let encoded: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d)).collect();
                let cfg = LdaConfig { seed: mix_seed(seed, 2), ..config.lda.clone() };
                let model = train_lda(&encoded, vocab.len(), &cfg)?;
                let m = lda_features(&model.theta);
                (FittedText::Lda { vocab, model, infer_seed: mix_seed(seed, 4) }, m)
            }
            Representation::Bertopic => {
                let (table, vectors) = match doc_vectors {
                    Some(v) => {
                        if v.len() != docs.len() {
                            return Err(TextRepError::Config(format!(
                                "{} document vectors for {} documents",
                                v.len(),
                                docs.len()
                            )));
                        }
                        (None, v.to_vec())
                    }
                    None => {
                        let table = train_skipgram(docs, &vocab, &skipgram())?;
                        let v = docs.iter().map(|d| doc_embedding(d, &table)).collect();
                        (Some(table), v)
                    }
                };
                let encoded: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d)).collect();
                let cfg = ClusterConfig { seed: mix_seed(seed, 3), ..config.cluster.clone() };
                let topics = ClusterTopics::fit(&vectors, &encoded, vocab.terms(), &cfg)?;
                let m = cluster_features(&topics.membership);
                (FittedText::Bertopic { vocab, table, topics }, m)
            }
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        match self {
            FittedText::Bow(v) | FittedText::Tfidf(v) => v,
            FittedText::Word2vec { vocab, .. } | FittedText::Lda { vocab, .. } | FittedText::Bertopic { vocab, .. } => {
                vocab
            }
        }
    }

    pub fn embedding_table(&self) -> Option<&EmbeddingTable> {
        match self {
            FittedText::Word2vec { table, .. } => Some(table),
            FittedText::Bertopic { table, .. } => table.as_ref(),
            _ => None,
        }
    }

    /// Featurize unseen documents. `doc_vectors` must be given exactly when it
    /// was given to [`FittedText::fit`].
    pub fn transform(&self, docs: &[Vec<String>], doc_vectors: Option<&[Vec<f64>]>) -> Result<FeatureMatrix, TextRepError> {
        Ok(match self {
            FittedText::Bow(v) => bow(docs, v),
            FittedText::Tfidf(v) => tfidf(docs, v),
            FittedText::Word2vec { table, .. } => embedding_features(docs, table),
            FittedText::Lda { vocab, model, infer_seed } => {
                let encoded: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d)).collect();
                lda_features(&model.infer(&encoded, *infer_seed))
            }
            FittedText::Bertopic { table, topics, .. } => {
                let vectors: Vec<Vec<f64>> = match (table, doc_vectors) {
                    (None, Some(v)) if v.len() == docs.len() => v.to_vec(),
                    (Some(t), None) => docs.iter().map(|d| doc_embedding(d, t)).collect(),
                    _ => return Err(TextRepError::Config("document vectors do not match the fitted model".into())),
                };
                cluster_features(&topics.transform(&vectors))
            }
        })
    }
}

/// Number of documents with no in-vocabulary token; these featurize to zero
/// rows (or uniform topic mixtures).
pub fn count_empty_docs(docs: &[Vec<String>], vocab: &Vocabulary) -> usize {
    docs.iter().filter(|d| d.iter().all(|t| vocab.id(t).is_none())).count()
}
