//! Offline annotation: keyword rules for refund levels and TF-IDF cosine
//! against per-industry seed lists. Pure and deterministic.

use dataprice_core::textrep::{tfidf, tokenize, Vocabulary};
use std::sync::OnceLock;

/// Seed keywords per industry, aligned with the scenario order.
pub const INDUSTRY_SEEDS: [&str; 12] = [
    "ecommerce commerce online sales sale inventory consumer consumers behavior shopping cart orders marketplace \
     purchases transactions catalog checkout merchants",
    "retail retailer retailers store stores location locations geographic geographical geolocation gps mobility poi \
     footfall foot traffic visits visitors shopper shoppers mall outlet advertising marketing ads",
    "financial finance bank banking banks insurance investment investments equity equities stock stocks bond bonds \
     trading portfolio dividend forex securities ticker options credit loans markets fund funds",
    "health healthcare medical medicine biology clinical trial trials disease diseases patient patients hospital \
     hospitals diagnosis pharmacy physician physicians drug drugs therapy genomic genomics genome covid coronavirus \
     pandemic",
    "resources natural energy oil gas mining mineral minerals agriculture agricultural crop crops farm farming power \
     electricity commodity commodities",
    "public government sector census records regulatory regulation federal municipal election demographic \
     demographics population tax",
    "media entertainment streaming content rating ratings social movie movies music television news video",
    "telecommunications telecom network networks call calls cellular carrier broadband wireless bandwidth latency \
     subscriber subscribers",
    "car cars automotive vehicle vehicles transportation transport sensor sensors traffic mileage fleet truck trucks \
     engine telematics registration auto dealer dealers",
    "manufacturing industrial production factory factories supply chain process machinery equipment parts assembly",
    "environment environmental climate sustainability pollution emission emissions carbon weather rainfall \
     temperature satellite forecast soil air esg",
    "gaming game games player players esports console gamer gamers",
];

struct SeedModel {
    vocab: Vocabulary,
    seeds: Vec<Vec<f64>>,
}

fn seed_model() -> &'static SeedModel {
    static MODEL: OnceLock<SeedModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let docs: Vec<Vec<String>> = INDUSTRY_SEEDS.iter().map(|s| tokenize(s)).collect();
        let vocab = Vocabulary::build(&docs, usize::MAX).expect("seed lists are nonempty");
        let m = tfidf(&docs, &vocab);
        let seeds = m.rows().map(<[f64]>::to_vec).collect();
        SeedModel { vocab, seeds }
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Similarity of `text` to each industry, scaled so the maximum is 1. A text
/// sharing no seed word is equally (un)like every industry and gets all ones.
pub fn industry_vector(text: &str) -> [f64; 12] {
    let model = seed_model();
    let doc = tfidf(&[tokenize(text)], &model.vocab);
    let mut out = [0.0; 12];
    for (o, s) in out.iter_mut().zip(&model.seeds) {
        *o = cosine(doc.row(0), s).max(0.0);
    }
    let max = out.iter().fold(0.0f64, |m, &x| m.max(x));
    if max == 0.0 {
        return [1.0; 12];
    }
    for o in &mut out {
        *o /= max;
    }
    out
}

fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn any(t: &str, needles: &[&str]) -> bool {
    needles.iter().any(|n| t.contains(n))
}

const CONDITIONAL: &[&str] = &[
    "refund available",
    "refunds available",
    "full refund",
    "partial refund",
    "prorated",
    "pro-rated",
    "refund only if",
    "refund if",
    "refunds if",
    "refunds issued",
    "refund issued",
    "refunds will be issued",
    "money back",
    "eligible for a refund",
    "refund within",
    "refunds within",
];

const CONTACT: &[&str] = &["contact", "support", "reach out", "email", "e-mail", "@", "we will fix", "we will work with"];

const DETAILS: &[&str] = &["trial", "sample", "all sales are final", "final sale", "disclaimer", "digital nature"];

const DENIAL: &[&str] = &[
    "no refund",
    "not offered",
    "non-refundable",
    "nonrefundable",
    "not refundable",
    "refunds not applicable",
    "refund not applicable",
    "no returns",
];

/// Refund level of one policy text. Rules are checked from level 4 down
/// through 3, 2 and 0; a text matching none is level 1 (not specified).
pub fn refund_level(text: &str) -> u8 {
    let t = normalize(text);
    let cancel_window = t.contains("refund") && t.contains("within") && t.contains("day");
    if any(&t, CONDITIONAL) || cancel_window {
        return 4;
    }
    if any(&t, CONTACT) {
        return 3;
    }
    // a bare "not applicable" is a disclaimer; "refunds not applicable" is a denial
    if any(&t, DETAILS) || (t.contains("not applicable") && !t.contains("refund")) {
        return 2;
    }
    if any(&t, DENIAL) {
        return 0;
    }
    1
}
