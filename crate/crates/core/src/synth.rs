//! Synthetic listings with planted topic -> log-price structure, for tests,
//! demos and the bundled fixture.
//!
//! Each listing belongs to one of five topics. Its text mixes signature words
//! of that topic with generic marketplace words, its industry scores peak on
//! the topic's industry, and its log-price is the topic mean plus Gaussian
//! noise. The remaining structured attributes are drawn independently of the
//! price.

use crate::corpus::{DataProduct, INDUSTRIES};
use crate::rng::rng_from;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub struct Topic {
    pub name: &'static str,
    pub words: [&'static str; 10],
    /// Index into the industry list.
    pub industry: usize,
    pub log_price: f64,
}

pub const TOPICS: [Topic; 5] = [
    Topic {
        name: "retail footfall",
        words: ["store", "footfall", "shopper", "mall", "visits", "retailer", "poi", "foot", "traffic", "outlet"],
        industry: 1,
        log_price: 4.0,
    },
    Topic {
        name: "climate",
        words: ["weather", "climate", "rainfall", "emission", "satellite", "temperature", "carbon", "soil", "pollution", "forecast"],
        industry: 10,
        log_price: 5.2,
    },
    Topic {
        name: "vehicles",
        words: ["vehicle", "car", "dealer", "mileage", "fleet", "truck", "engine", "telematics", "registration", "auto"],
        industry: 8,
        log_price: 6.4,
    },
    Topic {
        name: "clinical",
        words: ["patient", "clinical", "hospital", "diagnosis", "pharmacy", "physician", "drug", "claims", "therapy", "medical"],
        industry: 3,
        log_price: 7.6,
    },
    Topic {
        name: "markets",
        words: ["equity", "trading", "stock", "bond", "portfolio", "dividend", "forex", "securities", "ticker", "options"],
        industry: 2,
        log_price: 8.8,
    },
];

const GENERIC: [&str; 16] = [
    "data", "dataset", "updated", "daily", "coverage", "records", "api", "delivered", "history", "global", "quality",
    "fields", "sources", "product", "access", "files",
];

const REFUND_TEXT: [&str; 5] = [
    "No refunds.",
    "Refund policy not specified.",
    "Free trial available before purchase.",
    "Contact support for refund questions.",
    "Full refund available upon request.",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of the log-price around its topic mean.
    pub price_noise: f64,
    /// Signature words per document.
    pub signature_words: usize,
    /// Generic words per document.
    pub generic_words: usize,
    /// Chance that a signature word is drawn from another topic.
    pub crosstalk: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 600, seed: 0, price_noise: 0.3, signature_words: 8, generic_words: 10, crosstalk: 0.1 }
    }
}

/// Topic of each generated product, in order.
pub fn topics_of(config: &SynthConfig) -> Vec<usize> {
    generate_with_topics(config).1
}

pub fn generate(config: &SynthConfig) -> Vec<DataProduct> {
    generate_with_topics(config).0
}

/// Structured feature names of the industry columns that carry the planted
/// topic signal.
pub fn planted_columns() -> Vec<String> {
    TOPICS.iter().map(|t| format!("industry: {}", INDUSTRIES[t.industry])).collect()
}

fn sentence(rng: &mut impl Rng, topic: usize, config: &SynthConfig, n_sig: usize, n_gen: usize) -> String {
    let mut words = Vec::with_capacity(n_sig + n_gen);
    for _ in 0..n_sig {
        let t = if rng.random::<f64>() < config.crosstalk { rng.random_range(0..TOPICS.len()) } else { topic };
        words.push(*TOPICS[t].words.choose(rng).expect("nonempty"));
    }
    for _ in 0..n_gen {
        words.push(*GENERIC.choose(rng).expect("nonempty"));
    }
    // interleave deterministically through a seeded shuffle
    for i in (1..words.len()).rev() {
        let j = rng.random_range(0..=i);
        words.swap(i, j);
    }
    words.join(" ")
}

pub fn generate_with_topics(config: &SynthConfig) -> (Vec<DataProduct>, Vec<usize>) {
    let mut rng = rng_from(config.seed);
    let noise = Normal::new(0.0, config.price_noise).expect("finite noise");
    let mut products = Vec::with_capacity(config.n);
    let mut topics = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let topic = i % TOPICS.len();
        let t = &TOPICS[topic];
        let name = format!("{} {}", capitalize(t.words[rng.random_range(0..10)]), capitalize(GENERIC[rng.random_range(0..GENERIC.len())]));
        let half = config.signature_words / 2;
        let detail = sentence(&mut rng, topic, config, half, config.generic_words / 2);
        let description = sentence(&mut rng, topic, config, config.signature_words - half, config.generic_words - config.generic_words / 2);
        let mut scores = [0.0; 12];
        for s in &mut scores {
            *s = (rng.random::<f64>() * 0.3 * 100.0).round() / 100.0;
        }
        scores[t.industry] = 1.0;
        let refund = rng.random_range(0..5u8);
        let log_price = t.log_price + noise.sample(&mut rng);
        products.push(DataProduct {
            id: format!("syn-{i:04}"),
            name,
            detail,
            description,
            listed_provider: u8::from(rng.random::<f64>() < 0.08),
            volume: rng.random_range(1..=89),
            historical_version: rng.random_range(0..3),
            future_version: rng.random_range(0..2),
            sensitive: rng.random_range(0..3),
            data_sample: rng.random_range(0..2),
            support_email: rng.random_range(0..2),
            support_url: rng.random_range(0..2),
            refund_policy: refund,
            refund_text: Some(REFUND_TEXT[refund as usize].to_string()),
            industry_scores: Some(scores),
            price: (log_price.exp() * 100.0).round() / 100.0,
        });
        topics.push(topic);
    }
    (products, topics)
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}
