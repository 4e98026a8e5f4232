//! Vocabulary, bag-of-words counts and TF-IDF weights.

use super::TextRepError;
use crate::matrix::{csv_field, FeatureMatrix, Provenance};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const DEFAULT_MAX_TERMS: usize = 500;

/// Frequency-ranked term list with document frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyParts", into = "VocabularyParts")]
pub struct Vocabulary {
    terms: Vec<String>,
    /// Total occurrences of each term in the fitting corpus.
    counts: Vec<usize>,
    doc_freq: Vec<usize>,
    total_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct VocabularyParts {
    terms: Vec<String>,
    counts: Vec<usize>,
    doc_freq: Vec<usize>,
    total_docs: usize,
}

impl From<VocabularyParts> for Vocabulary {
    fn from(p: VocabularyParts) -> Self {
        Vocabulary::from_parts(p.terms, p.counts, p.doc_freq, p.total_docs)
    }
}

impl From<Vocabulary> for VocabularyParts {
    fn from(v: Vocabulary) -> Self {
        VocabularyParts { terms: v.terms, counts: v.counts, doc_freq: v.doc_freq, total_docs: v.total_docs }
    }
}

impl Vocabulary {
    /// Keep the `max_terms` most frequent tokens of `docs`; ties go to the
    /// lexicographically smaller term.
    pub fn build(docs: &[Vec<String>], max_terms: usize) -> Result<Self, TextRepError> {
        if docs.is_empty() {
            return Err(TextRepError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = Vec::with_capacity(doc.len());
            for t in doc {
                counts.entry(t.as_str()).or_default().0 += 1;
                seen.push(t.as_str());
            }
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                counts.get_mut(t).expect("counted above").1 += 1;
            }
        }
        let mut ranked: Vec<(&str, usize, usize)> =
            counts.into_iter().map(|(t, (c, df))| (t, c, df)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_terms);
        let terms = ranked.iter().map(|r| r.0.to_string()).collect();
        let counts = ranked.iter().map(|r| r.1).collect();
        let doc_freq = ranked.iter().map(|r| r.2).collect();
        Ok(Self::from_parts(terms, counts, doc_freq, docs.len()))
    }

    /// Assemble a vocabulary from stored parts.
    ///
    /// Panics if the slices differ in length or terms repeat.
    pub fn from_parts(terms: Vec<String>, counts: Vec<usize>, doc_freq: Vec<usize>, total_docs: usize) -> Self {
        assert_eq!(terms.len(), doc_freq.len());
        assert_eq!(terms.len(), counts.len());
        let index: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        assert_eq!(index.len(), terms.len(), "duplicate vocabulary terms");
        Self { terms, counts, doc_freq, total_docs, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Map tokens to term ids, dropping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Inverse document frequency `ln(N / (1 + df))`. Negative when a term
    /// occurs in every document; kept as computed.
    pub fn idf(&self) -> Vec<f64> {
        let n = self.total_docs as f64;
        self.doc_freq.iter().map(|&df| (n / (1.0 + df as f64)).ln()).collect()
    }

    /// `term,doc_freq` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,doc_freq\n");
        for (t, df) in self.terms.iter().zip(&self.doc_freq) {
            s.push_str(&format!("{},{}\n", csv_field(t), df));
        }
        s
    }
}

fn term_columns(vocab: &Vocabulary, prefix: &str) -> Vec<String> {
    vocab.terms().iter().map(|t| format!("{prefix}:{t}")).collect()
}

fn count_row(vocab: &Vocabulary, tokens: &[String]) -> Vec<f64> {
    let mut row = vec![0.0; vocab.len()];
    for id in vocab.encode(tokens) {
        row[id] += 1.0;
    }
    row
}

/// Bag-of-words term counts; out-of-vocabulary tokens are ignored.
pub fn bow(docs: &[Vec<String>], vocab: &Vocabulary) -> FeatureMatrix {
    let data: Vec<f64> = docs.iter().flat_map(|d| count_row(vocab, d)).collect();
    let names = term_columns(vocab, "bow");
    FeatureMatrix::new(docs.len(), names, vec![Provenance::Bow; vocab.len()], data)
        .expect("one row per document")
}

/// TF-IDF with `tf = count / (vocabulary tokens in the document)` and the
/// idf of [`Vocabulary::idf`]. Documents without vocabulary tokens give zero rows.
pub fn tfidf(docs: &[Vec<String>], vocab: &Vocabulary) -> FeatureMatrix {
    let idf = vocab.idf();
    let data: Vec<f64> = docs
        .iter()
        .flat_map(|d| {
            let mut row = count_row(vocab, d);
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for (v, w) in row.iter_mut().zip(&idf) {
                    *v = *v / total * w;
                }
            }
            row
        })
        .collect();
    let names = term_columns(vocab, "tfidf");
    FeatureMatrix::new(docs.len(), names, vec![Provenance::Tfidf; vocab.len()], data)
        .expect("one row per document")
}
