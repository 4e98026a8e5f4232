//! Run configuration: a TOML file whose every section is optional except the
//! seed and the data path. Relative paths resolve against the config file.

use crate::CliError;
use dataprice_annotate::{AnnotateOptions, EndpointConfig};
use dataprice_core::corpus::{DataFormat, TargetSpec};
use dataprice_core::eval::GridConfig;
use dataprice_core::models::mlp::MlpParams;
use dataprice_core::models::svm::SvmParams;
use dataprice_core::models::tree::CartParams;
use dataprice_core::models::{forest::ForestParams, gbt::GbtParams, Family, LinearParams, ModelSpec};
use dataprice_core::textrep::{ClusterConfig, LdaConfig, Representation, SkipGramConfig, TextRepConfig, DEFAULT_MAX_TERMS};
use dataprice_core::Task;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Master seed; every stage derives its seeds from it.
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub models: ModelSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub mrmr: MrmrSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub annotate: AnnotateSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    /// `csv` or `jsonl`; inferred from the extension when absent.
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    pub tasks: Vec<String>,
    pub log_transform: bool,
    pub tier_cutpoints: Option<[f64; 4]>,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { tasks: vec!["regression".into(), "classification".into()], log_transform: true, tier_cutpoints: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    pub representations: Vec<String>,
    pub structured: bool,
    pub max_terms: usize,
    /// CSV of externally computed document vectors for the cluster-topic
    /// representation, one row per product.
    pub doc_vectors: Option<PathBuf>,
    pub skipgram: SkipGramConfig,
    pub lda: LdaConfig,
    pub cluster: ClusterConfig,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            representations: Representation::ALL.iter().map(|r| r.as_str().to_string()).collect(),
            structured: true,
            max_terms: DEFAULT_MAX_TERMS,
            doc_vectors: None,
            skipgram: SkipGramConfig::default(),
            lda: LdaConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub families: Vec<String>,
    pub linear: LinearParams,
    pub mlp: MlpParams,
    pub cart: CartParams,
    pub svm: SvmParams,
    pub forest: ForestParams,
    pub gbt: GbtParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            families: Family::ALL.iter().map(|f| f.as_str().to_string()).collect(),
            linear: LinearParams::default(),
            mlp: MlpParams::default(),
            cart: CartParams::default(),
            svm: SvmParams::default(),
            forest: ForestParams::default(),
            gbt: GbtParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        Self { folds: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MrmrSection {
    /// Keep the top features per training fold in `evaluate` and on the full
    /// data in `select`/`train`; all features when absent.
    pub top: Option<usize>,
    pub bins: usize,
    pub curve: Vec<usize>,
    pub curve_representation: String,
    pub curve_family: String,
}

impl Default for MrmrSection {
    fn default() -> Self {
        Self {
            top: None,
            bins: dataprice_core::featsel::DEFAULT_BINS,
            curve: vec![1, 2, 3, 5, 8, 12, 20, 30, 50, 80],
            curve_representation: "tfidf".into(),
            curve_family: "gbt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub representation: String,
    pub family: String,
    /// Rows explained for the global ranking.
    pub sample: usize,
    /// Background rows for Kernel SHAP.
    pub background: usize,
    pub coalitions: usize,
    pub keywords: usize,
    /// Features listed in the importance ranking output.
    pub top: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            representation: "word2vec".into(),
            family: "gbt".into(),
            sample: 100,
            background: 50,
            coalitions: 2048,
            keywords: dataprice_core::explain::DEFAULT_KEYWORDS,
            top: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotateSection {
    pub enabled: bool,
    pub refund: bool,
    pub industry: bool,
    pub only_missing: bool,
    pub batch_size: usize,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        let o = AnnotateOptions::default();
        Self { enabled: true, refund: o.refund, industry: o.industry, only_missing: o.only_missing, batch_size: o.batch_size, endpoint: None }
    }
}

/// A validated configuration with typed selections and absolute paths.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub data_path: PathBuf,
    pub data_format: DataFormat,
    pub out_dir: PathBuf,
    pub tasks: Vec<Task>,
    pub representations: Vec<Representation>,
    pub families: Vec<Family>,
    pub curve_representation: Representation,
    pub curve_family: Family,
    pub explain_representation: Representation,
    pub explain_family: Family,
    pub doc_vectors: Option<PathBuf>,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {msg}"))
}

fn parse_list<T: std::str::FromStr<Err = String>>(field: &str, items: &[String]) -> Result<Vec<T>, CliError> {
    if items.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    let mut out = Vec::new();
    for (i, s) in items.iter().enumerate() {
        let v = s.parse::<T>().map_err(|e| invalid(&format!("{field}[{i}]"), e))?;
        out.push(v);
    }
    Ok(out)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(&path.display().to_string(), e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let first = inner.lines().find(|l| !l.trim().is_empty() && !l.starts_with("TOML parse error")).unwrap_or(&inner);
            let msg = inner.lines().last().map_or(first, |l| if l.trim().is_empty() { first } else { l });
            CliError::Validation(format!("{}: {}", if path == "." { "config" } else { &path }, msg.trim()))
        })?;
        Self::validate(raw, base)
    }

    pub fn validate(raw: RawConfig, base: &Path) -> Result<Self, CliError> {
        let tasks: Vec<Task> = parse_list("target.tasks", &raw.target.tasks)?;
        let representations: Vec<Representation> = parse_list("features.representations", &raw.features.representations)?;
        let families: Vec<Family> = parse_list("models.families", &raw.models.families)?;
        let curve_representation = raw
            .mrmr
            .curve_representation
            .parse()
            .map_err(|e| invalid("mrmr.curve_representation", e))?;
        let curve_family = raw.mrmr.curve_family.parse().map_err(|e| invalid("mrmr.curve_family", e))?;
        let explain_representation =
            raw.explain.representation.parse().map_err(|e| invalid("explain.representation", e))?;
        let explain_family = raw.explain.family.parse().map_err(|e| invalid("explain.family", e))?;
        if !representations.contains(&explain_representation) {
            return Err(invalid("explain.representation", "must be one of features.representations"));
        }
        if !families.contains(&explain_family) {
            return Err(invalid("explain.family", "must be one of models.families"));
        }
        if raw.cv.folds < 2 {
            return Err(invalid("cv.folds", "must be at least 2"));
        }
        if raw.mrmr.bins < 2 {
            return Err(invalid("mrmr.bins", "must be at least 2"));
        }
        if raw.mrmr.top == Some(0) {
            return Err(invalid("mrmr.top", "must be positive"));
        }
        if raw.mrmr.curve.is_empty() || raw.mrmr.curve[0] == 0 || raw.mrmr.curve.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("mrmr.curve", "must be positive and strictly ascending"));
        }
        if raw.features.max_terms == 0 {
            return Err(invalid("features.max_terms", "must be positive"));
        }
        if raw.explain.sample == 0 || raw.explain.background == 0 {
            return Err(invalid("explain", "sample and background must be positive"));
        }
        if raw.annotate.batch_size == 0 {
            return Err(invalid("annotate.batch_size", "must be positive"));
        }
        if let Some(cut) = raw.target.tier_cutpoints {
            if cut.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("target.tier_cutpoints", "must be strictly ascending"));
            }
        }
        if let Some(ep) = &raw.annotate.endpoint {
            ep.validate().map_err(|e| invalid("annotate.endpoint", e))?;
        }
        let data_path = resolve(base, &raw.data.path);
        let data_format = match &raw.data.format {
            Some(f) => f.parse().map_err(|e| invalid("data.format", e))?,
            None => match data_path.extension().and_then(|e| e.to_str()) {
                Some("csv") => DataFormat::Csv,
                Some("jsonl") | Some("json") => DataFormat::Jsonl,
                _ => return Err(invalid("data.format", "cannot infer from the file extension; set csv or jsonl")),
            },
        };
        Ok(Self {
            data_path,
            data_format,
            out_dir: resolve(base, &raw.out_dir),
            doc_vectors: raw.features.doc_vectors.as_ref().map(|p| resolve(base, p)),
            tasks,
            representations,
            families,
            curve_representation,
            curve_family,
            explain_representation,
            explain_family,
            raw,
        })
    }

    /// Hash of every setting that can change an output. The output directory
    /// is excluded so that a run can be relocated.
    pub fn hash(&self) -> String {
        let mut raw = self.raw.clone();
        raw.out_dir = PathBuf::new();
        if let Some(ep) = &mut raw.annotate.endpoint {
            // retry and timeout policy never changes a cached answer
            ep.timeout_secs = 0.0;
            ep.retries = 0;
            ep.backoff_ms = 0;
            ep.cache_dir = None;
        }
        let json = serde_json::to_string(&raw).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn target_spec(&self, task: Task) -> TargetSpec {
        match task {
            Task::Regression => TargetSpec { log_transform: self.raw.target.log_transform, ..TargetSpec::regression() },
            Task::Classification => {
                TargetSpec { tier_cutpoints: self.raw.target.tier_cutpoints.map(|c| c.to_vec()), ..TargetSpec::classification() }
            }
        }
    }

    pub fn textrep(&self) -> TextRepConfig {
        TextRepConfig {
            max_terms: self.raw.features.max_terms,
            skipgram: self.raw.features.skipgram.clone(),
            lda: self.raw.features.lda.clone(),
            cluster: self.raw.features.cluster.clone(),
        }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            folds: self.raw.cv.folds,
            textrep: self.textrep(),
            structured: self.raw.features.structured,
            mrmr_top: self.raw.mrmr.top,
            mrmr_bins: self.raw.mrmr.bins,
        }
    }

    pub fn spec(&self, family: Family) -> ModelSpec {
        let m = &self.raw.models;
        match family {
            Family::Linear => ModelSpec::Linear(m.linear.clone()),
            Family::Mlp => ModelSpec::Mlp(m.mlp.clone()),
            Family::Cart => ModelSpec::Cart(m.cart.clone()),
            Family::Svm => ModelSpec::Svm(m.svm.clone()),
            Family::Forest => ModelSpec::Forest(m.forest.clone()),
            Family::Gbt => ModelSpec::Gbt(m.gbt.clone()),
        }
    }

    pub fn specs(&self) -> Vec<ModelSpec> {
        self.families.iter().map(|&f| self.spec(f)).collect()
    }

    pub fn annotate_options(&self) -> AnnotateOptions {
        let a = &self.raw.annotate;
        let endpoint = a.endpoint.clone().map(|mut e| {
            if e.cache_dir.is_none() {
                e.cache_dir = Some(self.out_dir.join("cache").join("annotate"));
            }
            e
        });
        AnnotateOptions { refund: a.refund, industry: a.industry, only_missing: a.only_missing, batch_size: a.batch_size, endpoint }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_toml(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = load("seed = 3\n[data]\npath = \"p.jsonl\"\n").unwrap();
        assert_eq!(c.data_path, PathBuf::from("/base/p.jsonl"));
        assert_eq!(c.out_dir, PathBuf::from("/base/out"));
        assert_eq!(c.tasks, vec![Task::Regression, Task::Classification]);
        assert_eq!(c.families.len(), 6);
        assert_eq!(c.representations.len(), 5);
    }

    #[test]
    fn errors_name_the_field() {
        let e = load("seed = 3\n[data]\npath = \"p.jsonl\"\n[models]\nfamilies = [\"gbt\", \"catboost\"]\n").unwrap_err();
        assert!(e.to_string().contains("models.families[1]") && e.to_string().contains("catboost"), "{e}");
        let e = load("seed = 3\n[data]\npath = \"p.jsonl\"\n[models.gbt]\nn_rounds = \"many\"\n").unwrap_err();
        assert!(e.to_string().contains("models.gbt.n_rounds"), "{e}");
        let e = load("seed = 3\n[data]\npath = \"p.jsonl\"\n[cv]\nfold = 3\n").unwrap_err();
        assert!(e.to_string().starts_with("validation error: cv"), "{e}");
        let e = load("[data]\npath = \"p.jsonl\"\n").unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
        assert!(load("seed = 1\n[data]\npath = \"p.txt\"\n").is_err());
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = load("seed = 3\nout_dir = \"a\"\n[data]\npath = \"p.jsonl\"\n").unwrap();
        let b = load("seed = 3\nout_dir = \"b\"\n[data]\npath = \"p.jsonl\"\n").unwrap();
        let c = load("seed = 4\nout_dir = \"b\"\n[data]\npath = \"p.jsonl\"\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
