//! Stage manifests: which config and inputs produced which outputs.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    /// Input role to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the stage directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
}

pub fn versions() -> BTreeMap<String, String> {
    [
        ("dataprice", env!("CARGO_PKG_VERSION").to_string()),
        ("model_format", dataprice_core::models::FORMAT_VERSION.to_string()),
        ("stopwords", dataprice_core::textrep::STOPWORDS_VERSION.to_string()),
        ("prompts", dataprice_annotate::prompt::PROMPT_VERSION.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn load(dir: &Path) -> Option<Manifest> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// True when every recorded output is still on disk unmodified.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
    }
}
