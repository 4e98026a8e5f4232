//! Product listings: ingestion, text composition, structured encoding,
//! targets and descriptive statistics.

use crate::matrix::{csv_field, FeatureMatrix, Provenance};
use crate::Task;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

/// The twelve industry scenarios, in annotation-prompt order.
pub const INDUSTRIES: [&str; 12] = [
    "E-commerce and Business Data",
    "Retail and Location Data",
    "Financial Services",
    "Healthcare and Life Sciences Data",
    "Resources Data",
    "Public Sector Data",
    "Media and Entertainment Data",
    "Telecommunications Data",
    "Cars and Automotive Data",
    "Manufacturing Data",
    "Environmental Data",
    "Gaming Data",
];

/// CSV column names of the industry scores, aligned with [`INDUSTRIES`].
pub const INDUSTRY_COLUMNS: [&str; 12] = [
    "ind_ecommerce",
    "ind_retail_location",
    "ind_financial",
    "ind_healthcare",
    "ind_resources",
    "ind_public_sector",
    "ind_media",
    "ind_telecom",
    "ind_automotive",
    "ind_manufacturing",
    "ind_environmental",
    "ind_gaming",
];

/// Structured columns in encoding order (before the industry scores).
pub const STRUCTURED_COLUMNS: [&str; 9] = [
    "listed_provider",
    "volume",
    "historical_version",
    "future_version",
    "sensitive",
    "data_sample",
    "support_email",
    "support_url",
    "refund_policy",
];

/// Price-tier upper bounds for classes 0..=3 observed on the marketplace crawl.
pub const REFERENCE_TIER_CUTPOINTS: [f64; 4] = [208.33, 416.67, 1250.0, 3175.0];

const REQUIRED_COLUMNS: [&str; 14] = [
    "id",
    "name",
    "detail",
    "description",
    "listed_provider",
    "volume",
    "historical_version",
    "future_version",
    "sensitive",
    "data_sample",
    "support_email",
    "support_url",
    "refund_policy",
    "price",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("product '{0}' has no industry scores; run `annotate` first")]
    MissingIndustry(String),
    #[error("non-positive price {price} at row {row} cannot be log-transformed")]
    NonPositivePrice { row: usize, price: f64 },
    #[error("tier cutpoints must be 4 strictly ascending finite values, got {0:?}")]
    Cutpoints(Vec<f64>),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One marketplace listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataProduct {
    pub id: String,
    pub name: String,
    pub detail: String,
    pub description: String,
    pub listed_provider: u8,
    pub volume: u32,
    pub historical_version: u8,
    pub future_version: u8,
    pub sensitive: u8,
    pub data_sample: u8,
    pub support_email: u8,
    pub support_url: u8,
    pub refund_policy: u8,
    /// Raw refund-policy wording, when available, for re-annotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refund_text: Option<String>,
    #[serde(default)]
    pub industry_scores: Option<[f64; 12]>,
    pub price: f64,
}

impl DataProduct {
    /// Check every field against its documented range.
    pub fn validate(&self) -> Result<(), String> {
        let binary = [
            ("listed_provider", self.listed_provider),
            ("future_version", self.future_version),
            ("data_sample", self.data_sample),
            ("support_email", self.support_email),
            ("support_url", self.support_url),
        ];
        for (name, v) in binary {
            if v > 1 {
                return Err(format!("{name} must be 0 or 1, got {v}"));
            }
        }
        if self.historical_version > 2 {
            return Err(format!("historical_version must be in 0..=2, got {}", self.historical_version));
        }
        if self.sensitive > 2 {
            return Err(format!("sensitive must be in 0..=2, got {}", self.sensitive));
        }
        if self.refund_policy > 4 {
            return Err(format!("refund level {} outside [0,4]", self.refund_policy));
        }
        if self.volume < 1 {
            return Err("volume must be >= 1".into());
        }
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(format!("price must be positive, got {}", self.price));
        }
        if let Some(scores) = &self.industry_scores {
            validate_industry_scores(scores)?;
        }
        Ok(())
    }
}

/// Industry scores must lie in [0,1] with maximum exactly 1.
pub fn validate_industry_scores(scores: &[f64]) -> Result<(), String> {
    if scores.len() != 12 {
        return Err(format!("expected 12 industry scores, got {}", scores.len()));
    }
    if let Some((i, v)) = scores.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(format!("industry score {i} = {v} outside [0,1]"));
    }
    let max = scores.iter().copied().fold(f64::MIN, f64::max);
    if max != 1.0 {
        return Err(format!("industry scores must have maximum 1.0, got {max}"));
    }
    Ok(())
}

/// Single industry label: argmax of the scores, lower index on ties.
pub fn industry_label(scores: &[f64; 12]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(format!("unknown data format '{other}' (expected csv or jsonl)")),
        }
    }
}

pub fn load_products(path: &Path, format: DataFormat) -> Result<Vec<DataProduct>, CorpusError> {
    match format {
        DataFormat::Csv => load_csv(std::fs::File::open(path)?),
        DataFormat::Jsonl => load_jsonl(std::io::BufReader::new(std::fs::File::open(path)?)),
    }
}

/// Parse products from CSV. Rows are numbered from 1 (header excluded).
pub fn load_csv<R: std::io::Read>(reader: R) -> Result<Vec<DataProduct>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
    let header: HashMap<String, usize> =
        rdr.headers()?.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    for col in REQUIRED_COLUMNS {
        if !header.contains_key(col) {
            return Err(CorpusError::MissingColumn(col.to_string()));
        }
    }
    let industry_idx: Option<Vec<usize>> = INDUSTRY_COLUMNS
        .iter()
        .map(|c| header.get(*c).copied())
        .collect::<Option<Vec<_>>>();
    let refund_text_idx = header.get("refund_text").copied();

    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |name: &str| record.get(header[name]).unwrap_or("");
        let err = |message: String| CorpusError::Row { row, message };
        let int = |name: &str| -> Result<u32, CorpusError> {
            field(name)
                .parse::<u32>()
                .map_err(|_| err(format!("{name} '{}' is not a non-negative integer", field(name))))
        };
        let small = |name: &str| -> Result<u8, CorpusError> {
            let v = int(name)?;
            u8::try_from(v).map_err(|_| err(format!("{name} {v} out of range")))
        };
        let price_raw = field("price");
        let price: f64 = price_raw
            .parse()
            .map_err(|_| err(format!("price '{price_raw}' is not numeric")))?;

        let industry_scores = match &industry_idx {
            Some(idx) => {
                let cells: Vec<&str> = idx.iter().map(|&j| record.get(j).unwrap_or("")).collect();
                if cells.iter().all(|c| c.is_empty()) {
                    None
                } else {
                    let mut scores = [0.0; 12];
                    for (k, c) in cells.iter().enumerate() {
                        scores[k] = c.parse().map_err(|_| {
                            err(format!("{} '{c}' is not numeric", INDUSTRY_COLUMNS[k]))
                        })?;
                    }
                    Some(scores)
                }
            }
            None => None,
        };
        let refund_text = refund_text_idx
            .and_then(|j| record.get(j))
            .filter(|s| !s.is_empty())
            .map(str::to_string);

        let p = DataProduct {
            id: field("id").to_string(),
            name: field("name").to_string(),
            detail: field("detail").to_string(),
            description: field("description").to_string(),
            listed_provider: small("listed_provider")?,
            volume: int("volume")?,
            historical_version: small("historical_version")?,
            future_version: small("future_version")?,
            sensitive: small("sensitive")?,
            data_sample: small("data_sample")?,
            support_email: small("support_email")?,
            support_url: small("support_url")?,
            refund_policy: small("refund_policy")?,
            refund_text,
            industry_scores,
            price,
        };
        p.validate().map_err(err)?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_jsonl<R: BufRead>(reader: R) -> Result<Vec<DataProduct>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: DataProduct = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Row { row, message: e.to_string() })?;
        p.validate().map_err(|message| CorpusError::Row { row, message })?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(products: &[DataProduct], mut w: W) -> Result<(), CorpusError> {
    for p in products {
        serde_json::to_writer(&mut w, p).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(products: &[DataProduct], w: W) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.push("refund_text");
    header.extend(INDUSTRY_COLUMNS);
    wtr.write_record(&header)?;
    for p in products {
        let mut rec = vec![
            p.id.clone(),
            p.name.clone(),
            p.detail.clone(),
            p.description.clone(),
            p.listed_provider.to_string(),
            p.volume.to_string(),
            p.historical_version.to_string(),
            p.future_version.to_string(),
            p.sensitive.to_string(),
            p.data_sample.to_string(),
            p.support_email.to_string(),
            p.support_url.to_string(),
            p.refund_policy.to_string(),
            p.price.to_string(),
            p.refund_text.clone().unwrap_or_default(),
        ];
        match &p.industry_scores {
            Some(s) => rec.extend(s.iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), 12)),
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Product information text: name, detail and description joined by spaces.
pub fn compose_text(p: &DataProduct) -> String {
    format!("{} {} {}", p.name, p.detail, p.description)
}

/// Names of the 21 structured columns produced by [`encode_structured`].
pub fn structured_names() -> Vec<String> {
    STRUCTURED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(INDUSTRIES.iter().map(|s| format!("industry: {s}")))
        .collect()
}

/// Structured attributes as a 21-vector (9 attributes, then 12 industry scores),
/// copied without scaling.
pub fn encode_structured(p: &DataProduct) -> Result<Vec<f64>, CorpusError> {
    let scores = p.industry_scores.ok_or_else(|| CorpusError::MissingIndustry(p.id.clone()))?;
    let mut v = vec![
        f64::from(p.listed_provider),
        f64::from(p.volume),
        f64::from(p.historical_version),
        f64::from(p.future_version),
        f64::from(p.sensitive),
        f64::from(p.data_sample),
        f64::from(p.support_email),
        f64::from(p.support_url),
        f64::from(p.refund_policy),
    ];
    v.extend_from_slice(&scores);
    Ok(v)
}

pub fn structured_matrix(products: &[DataProduct]) -> Result<FeatureMatrix, CorpusError> {
    let rows = products.iter().map(encode_structured).collect::<Result<Vec<_>, _>>()?;
    let names = structured_names();
    let n_cols = names.len();
    Ok(FeatureMatrix::new(
        products.len(),
        names,
        vec![Provenance::Structured; n_cols],
        rows.concat(),
    )
    .expect("structured rows have fixed width"))
}

/// How prices become learning targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: Task,
    #[serde(default = "default_true")]
    pub log_transform: bool,
    /// Upper bounds of classes 0..=3. `None` uses the 20/40/60/80th
    /// empirical price quantiles.
    #[serde(default)]
    pub tier_cutpoints: Option<Vec<f64>>,
}

fn default_true() -> bool {
    true
}

impl TargetSpec {
    pub fn regression() -> Self {
        Self { kind: Task::Regression, log_transform: true, tier_cutpoints: None }
    }

    pub fn classification() -> Self {
        Self { kind: Task::Classification, log_transform: false, tier_cutpoints: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Continuous(Vec<f64>),
    Tiers { labels: Vec<usize>, cutpoints: [f64; 4] },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Continuous(v) => v.len(),
            Targets::Tiers { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Targets as reals (class indices for tiers).
    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            Targets::Continuous(v) => v.clone(),
            Targets::Tiers { labels, .. } => labels.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Continuous(_) => Task::Regression,
            Targets::Tiers { .. } => Task::Classification,
        }
    }
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Default tier cutpoints: 20/40/60/80th percentiles of the prices.
pub fn quantile_cutpoints(prices: &[f64]) -> Result<[f64; 4], CorpusError> {
    if prices.len() < 2 {
        return Err(CorpusError::TooFewRows { need: 2, got: prices.len() });
    }
    let mut sorted = prices.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts = [0.2, 0.4, 0.6, 0.8].map(|p| quantile_sorted(&sorted, p));
    check_cutpoints(&cuts)?;
    Ok(cuts)
}

fn check_cutpoints(c: &[f64]) -> Result<[f64; 4], CorpusError> {
    let ok = c.len() == 4 && c.iter().all(|v| v.is_finite()) && c.windows(2).all(|w| w[0] < w[1]);
    if !ok {
        return Err(CorpusError::Cutpoints(c.to_vec()));
    }
    Ok([c[0], c[1], c[2], c[3]])
}

/// Tier of a price: the number of cutpoints strictly below it, so a price equal
/// to a cutpoint stays in the lower class.
pub fn tier_of(price: f64, cutpoints: &[f64; 4]) -> usize {
    cutpoints.iter().filter(|&&c| c < price).count()
}

pub fn make_targets(products: &[DataProduct], spec: &TargetSpec) -> Result<Targets, CorpusError> {
    let prices: Vec<f64> = products.iter().map(|p| p.price).collect();
    match spec.kind {
        Task::Regression => {
            if !spec.log_transform {
                return Ok(Targets::Continuous(prices));
            }
            prices
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    if p > 0.0 {
                        Ok(p.ln())
                    } else {
                        Err(CorpusError::NonPositivePrice { row: i + 1, price: p })
                    }
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Targets::Continuous)
        }
        Task::Classification => {
            let cutpoints = match &spec.tier_cutpoints {
                Some(c) => check_cutpoints(c)?,
                None => quantile_cutpoints(&prices)?,
            };
            let labels = prices.iter().map(|&p| tier_of(p, &cutpoints)).collect();
            Ok(Targets::Tiers { labels, cutpoints })
        }
    }
}

/// Moments of one column. Skewness and kurtosis are `None` for a constant column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub max: f64,
    pub min: f64,
    /// Standardized third central moment, m3 / m2^1.5.
    pub skewness: Option<f64>,
    /// Excess kurtosis, m4 / m2^2 - 3.
    pub kurtosis: Option<f64>,
}

pub fn column_stats(values: &[f64]) -> Result<ColumnStats, CorpusError> {
    let n = values.len();
    if n < 2 {
        return Err(CorpusError::TooFewRows { need: 2, got: n });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let constant = max == min;
    Ok(ColumnStats {
        mean: mean.clamp(min, max),
        std,
        max,
        min,
        skewness: (!constant).then(|| m3 / m2.powf(1.5)),
        kurtosis: (!constant).then(|| m4 / (m2 * m2) - 3.0),
    })
}

/// Per-feature statistics in the row order of the marketplace summary table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescriptiveStats {
    pub rows: Vec<(String, ColumnStats)>,
}

const DESCRIBE_ROWS: [(&str, usize); 9] = [
    ("Data provider is listed", 0),
    ("Data volume number", 1),
    ("Sensitive level", 4),
    ("Future version", 3),
    ("Historical version", 2),
    ("Data sample", 5),
    ("Email", 6),
    ("URL", 7),
    ("Refund", 8),
];

pub fn describe(products: &[DataProduct]) -> Result<DescriptiveStats, CorpusError> {
    let columns: Vec<[f64; 9]> = products
        .iter()
        .map(|p| {
            [
                f64::from(p.listed_provider),
                f64::from(p.volume),
                f64::from(p.historical_version),
                f64::from(p.future_version),
                f64::from(p.sensitive),
                f64::from(p.data_sample),
                f64::from(p.support_email),
                f64::from(p.support_url),
                f64::from(p.refund_policy),
            ]
        })
        .collect();
    let rows = DESCRIBE_ROWS
        .iter()
        .map(|&(label, j)| {
            let col: Vec<f64> = columns.iter().map(|r| r[j]).collect();
            column_stats(&col).map(|s| (label.to_string(), s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DescriptiveStats { rows })
}

impl DescriptiveStats {
    /// CSV with columns Feature, Average, Std, Max, Min, Skewness, Kurtosis.
    pub fn to_csv(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        let mut s = String::from("Feature,Average,Std,Max,Min,Skewness,Kurtosis\n");
        for (label, st) in &self.rows {
            s.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{},{}\n",
                csv_field(label),
                st.mean,
                st.std,
                st.max,
                st.min,
                fmt_opt(st.skewness),
                fmt_opt(st.kurtosis)
            ));
        }
        s
    }
}
