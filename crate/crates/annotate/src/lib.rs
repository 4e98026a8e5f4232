//! Refund-policy levels and industry similarity vectors for data products,
//! from an OpenAI-compatible chat endpoint or, without one, from offline
//! keyword rules.

pub mod client;
pub mod fallback;
pub mod parse;
pub mod prompt;

pub use client::{call_llm, EndpointConfig, ResponseCache};
pub use fallback::{industry_vector, refund_level};
pub use parse::{industry_label, parse_industry, parse_refund};
pub use prompt::{build_prompt, Kind};

use dataprice_core::corpus::{compose_text, DataProduct};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("annotation batch is empty")]
    EmptyBatch,
    #[error("invalid annotation settings: {0}")]
    Config(String),
    #[error("endpoint unreachable after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("item {index}: value {value} out of range")]
    OutOfRange { index: usize, value: f64 },
    #[error("expected {expected} items, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("item {index}: expected 12 scores, got {got}")]
    Arity { index: usize, got: usize },
    #[error("item {index}: maximum score {max} is not 1")]
    MaxConstraint { index: usize, max: f64 },
    #[error("response cache: {0}")]
    Cache(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRequest {
    pub kind: Kind,
    pub texts: Vec<String>,
    /// `None` selects the offline rules.
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Annotations {
    Refund(Vec<u8>),
    Industry(Vec<[f64; 12]>),
}

/// Offline annotation of a batch.
pub fn fallback_annotate(kind: Kind, texts: &[String]) -> Annotations {
    match kind {
        Kind::Refund => Annotations::Refund(texts.iter().map(|t| refund_level(t)).collect()),
        Kind::Industry => Annotations::Industry(texts.iter().map(|t| industry_vector(t)).collect()),
    }
}

/// Annotate one batch through the endpoint when configured, else offline.
pub fn annotate(request: &AnnotationRequest) -> Result<Annotations, AnnotationError> {
    if request.texts.is_empty() {
        return Err(AnnotationError::EmptyBatch);
    }
    let Some(endpoint) = &request.endpoint else {
        return Ok(fallback_annotate(request.kind, &request.texts));
    };
    let response = call_llm(&build_prompt(request.kind, &request.texts), endpoint)?;
    let n = request.texts.len();
    match request.kind {
        Kind::Refund => parse_refund(&response, n).map(Annotations::Refund),
        Kind::Industry => parse_industry(&response, n).map(Annotations::Industry),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateOptions {
    pub refund: bool,
    pub industry: bool,
    /// Keep existing industry scores and only fill missing ones.
    pub only_missing: bool,
    pub batch_size: usize,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self { refund: true, industry: true, only_missing: true, batch_size: 20, endpoint: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub refund_updated: usize,
    pub industry_updated: usize,
    pub source: String,
}

/// Annotate products in place, batch by batch, preserving order. Refund
/// levels are recomputed only for products that carry their refund wording.
pub fn annotate_products(products: &mut [DataProduct], options: &AnnotateOptions) -> Result<AnnotateSummary, AnnotationError> {
    if options.batch_size == 0 {
        return Err(AnnotationError::Config("batch_size must be positive".into()));
    }
    let mut summary = AnnotateSummary {
        source: if options.endpoint.is_some() { "endpoint" } else { "offline rules" }.into(),
        ..Default::default()
    };
    if options.refund {
        let idx: Vec<usize> = (0..products.len()).filter(|&i| products[i].refund_text.is_some()).collect();
        for chunk in idx.chunks(options.batch_size) {
            let texts = chunk.iter().map(|&i| products[i].refund_text.clone().unwrap_or_default()).collect();
            let req = AnnotationRequest { kind: Kind::Refund, texts, endpoint: options.endpoint.clone() };
            let Annotations::Refund(levels) = annotate(&req)? else { unreachable!("refund request") };
            for (&i, l) in chunk.iter().zip(levels) {
                products[i].refund_policy = l;
            }
            summary.refund_updated += chunk.len();
        }
    }
    if options.industry {
        let idx: Vec<usize> =
            (0..products.len()).filter(|&i| !options.only_missing || products[i].industry_scores.is_none()).collect();
        for chunk in idx.chunks(options.batch_size) {
            let texts = chunk.iter().map(|&i| compose_text(&products[i])).collect();
            let req = AnnotationRequest { kind: Kind::Industry, texts, endpoint: options.endpoint.clone() };
            let Annotations::Industry(vectors) = annotate(&req)? else { unreachable!("industry request") };
            for (&i, v) in chunk.iter().zip(vectors) {
                products[i].industry_scores = Some(v);
            }
            summary.industry_updated += chunk.len();
        }
    }
    Ok(summary)
}
