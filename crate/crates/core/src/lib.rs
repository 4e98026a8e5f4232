//! Feature engineering, selection, learning and explanation for data-product
//! price modeling.
//!
//! The pipeline runs in the same order as the modules below: listings are
//! loaded and encoded ([`corpus`]), their text is turned into one of five
//! representations ([`textrep`]), features are ranked by mRMR ([`featsel`]),
//! one of six learner families is fitted ([`models`]) and scored under k-fold
//! cross-validation ([`eval`]), and fitted models are explained with Shapley
//! values ([`explain`]).

pub mod corpus;
pub mod eval;
pub mod explain;
pub mod featsel;
pub mod matrix;
pub mod models;
pub mod rng;
pub mod synth;
pub mod textrep;

pub use matrix::{FeatureMatrix, Provenance};

use serde::{Deserialize, Serialize};

/// Prediction task: continuous (log-)price or five-tier price class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Regression => f.write_str("regression"),
            Task::Classification => f.write_str("classification"),
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}
