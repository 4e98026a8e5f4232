//! One function per subcommand. Artifact layout under the output directory:
//!
//! | stage       | files                                                              |
//! |-------------|--------------------------------------------------------------------|
//! | `ingest`    | `products.jsonl`, `describe.csv`, `price_histogram.csv`            |
//! | `annotate`  | `products.jsonl`, `summary.json`                                   |
//! | `featurize` | `<rep>.csv`, `vocabulary.csv`, `word2vec_embeddings.txt`           |
//! | `select`    | `<task>_<rep>_mrmr.csv`, `<task>_<rep>_mrmr.json`                  |
//! | `train`     | `<task>_<rep>_<family>.json`                                       |
//! | `evaluate`  | `report_<task>.txt`, `report_<task>.csv`                           |
//! | `curve`     | `curve_<task>.csv`, `curve_<task>_fold<k>_mrmr.csv`                |
//! | `explain`   | `importance_<task>.csv`, `beeswarm_<task>.csv`, `keywords_<task>.txt` |
//! | `report`    | `report.txt` and the table/figure CSVs it summarizes              |

use crate::manifest::Manifest;
use crate::{write_output, CliError, Context, Outcome};
use dataprice_annotate::annotate_products;
use dataprice_core::corpus::{describe, load_jsonl, load_products, make_targets, structured_matrix, write_jsonl, DataProduct, Targets};
use dataprice_core::eval::{feature_curve, product_docs, run_grid, Dataset};
use dataprice_core::explain::{embedding_dim_of, embedding_keywords, global_importance, GlobalImportance, KernelShapConfig};
use dataprice_core::featsel::{discretize_target, mrmr_select, SelectionTrace};
use dataprice_core::models::TrainedModel;
use dataprice_core::rng::mix_path;
use dataprice_core::synth::{generate, SynthConfig};
use dataprice_core::textrep::{load_doc_vectors_csv, EmbeddingTable, FittedText, Representation};
use dataprice_core::{FeatureMatrix, Task};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const PRODUCTS_FILE: &str = "products.jsonl";
pub const EMBEDDINGS_FILE: &str = "word2vec_embeddings.txt";
const HISTOGRAM_BINS: usize = 20;

fn read_products(path: &Path) -> Result<Vec<DataProduct>, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    load_jsonl(std::io::BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn products_bytes(products: &[DataProduct]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_jsonl(products, &mut buf).map_err(CliError::runtime)?;
    Ok(buf)
}

/// The product file later stages consume: annotated when annotation is
/// enabled, otherwise the ingested copy.
fn products_input(ctx: &Context) -> Result<PathBuf, CliError> {
    if ctx.config.raw.annotate.enabled {
        ctx.require("annotate", PRODUCTS_FILE)
    } else {
        ctx.require("ingest", PRODUCTS_FILE)
    }
}

fn doc_vectors(ctx: &Context) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    match &ctx.config.doc_vectors {
        Some(p) => load_doc_vectors_csv(p).map(Some).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => Ok(None),
    }
}

fn doc_vector_inputs(ctx: &Context, inputs: &mut Vec<(String, PathBuf)>) -> Result<(), CliError> {
    if let Some(p) = &ctx.config.doc_vectors {
        if !p.is_file() {
            return Err(CliError::Validation(format!("features.doc_vectors: {} does not exist", p.display())));
        }
        inputs.push(("doc_vectors".into(), p.clone()));
    }
    Ok(())
}

fn targets(ctx: &Context, products: &[DataProduct], task: Task) -> Result<Targets, CliError> {
    make_targets(products, &ctx.config.target_spec(task)).map_err(|e| CliError::Runtime(format!("{task} targets: {e}")))
}

fn task_index(task: Task) -> u64 {
    match task {
        Task::Regression => 0,
        Task::Classification => 1,
    }
}

/// Equal-width histogram rows `scale,bin,lower,upper,count`.
fn histogram(scale: &str, values: &[f64], out: &mut String) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{scale},{b},{},{},{c}", lo + b as f64 * width, lo + (b + 1) as f64 * width);
    }
}

pub fn ingest(ctx: &Context) -> Result<Outcome, CliError> {
    let data = ctx.config.data_path.clone();
    if !data.is_file() {
        return Err(CliError::Validation(format!("data.path: {} does not exist", data.display())));
    }
    ctx.run_stage("ingest", &[("data".into(), data.clone())], |dir| {
        let products = load_products(&data, ctx.config.data_format)
            .map_err(|e| CliError::Validation(format!("data: {}: {e}", data.display())))?;
        if products.is_empty() {
            return Err(CliError::Validation(format!("data: {} holds no products", data.display())));
        }
        let stats = describe(&products).map_err(CliError::runtime)?;
        let prices: Vec<f64> = products.iter().map(|p| p.price).collect();
        let mut hist = String::from("scale,bin,lower,upper,count\n");
        histogram("price", &prices, &mut hist);
        if prices.iter().all(|&p| p > 0.0) {
            histogram("log_price", &prices.iter().map(|p| p.ln()).collect::<Vec<_>>(), &mut hist);
        }
        log::info!("ingested {} products", products.len());
        Ok(vec![
            write_output(dir, PRODUCTS_FILE, products_bytes(&products)?)?,
            write_output(dir, "describe.csv", stats.to_csv())?,
            write_output(dir, "price_histogram.csv", hist)?,
        ])
    })
}

pub fn annotate(ctx: &Context) -> Result<Outcome, CliError> {
    if !ctx.config.raw.annotate.enabled {
        return Err(CliError::Validation("annotate.enabled: annotation is disabled in this config".into()));
    }
    let input = ctx.require("ingest", PRODUCTS_FILE)?;
    ctx.run_stage("annotate", &[("products".into(), input.clone())], |dir| {
        let mut products = read_products(&input)?;
        let summary = annotate_products(&mut products, &ctx.config.annotate_options()).map_err(CliError::runtime)?;
        log::info!(
            "annotated {} refund levels and {} industry vectors ({})",
            summary.refund_updated,
            summary.industry_updated,
            summary.source
        );
        Ok(vec![
            write_output(dir, PRODUCTS_FILE, products_bytes(&products)?)?,
            write_output(dir, "summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?,
        ])
    })
}

fn feature_file(rep: Representation) -> String {
    format!("{}.csv", rep.as_str())
}

pub fn featurize(ctx: &Context) -> Result<Outcome, CliError> {
    let input = products_input(ctx)?;
    let mut inputs = vec![("products".into(), input.clone())];
    doc_vector_inputs(ctx, &mut inputs)?;
    ctx.run_stage("featurize", &inputs, |dir| {
        let products = read_products(&input)?;
        let docs = product_docs(&products);
        let vectors = doc_vectors(ctx)?;
        let structured = if ctx.config.raw.features.structured {
            Some(structured_matrix(&products).map_err(CliError::runtime)?)
        } else {
            None
        };
        let textrep = ctx.config.textrep();
        let mut files = Vec::new();
        for (i, &rep) in ctx.config.representations.iter().enumerate() {
            let seed = mix_path(ctx.config.raw.seed, &[100, rep as u64]);
            let dv = if rep == Representation::Bertopic { vectors.as_deref() } else { None };
            let (fitted, mut m) =
                FittedText::fit(rep, &docs, &textrep, seed, dv).map_err(|e| CliError::Runtime(format!("{rep}: {e}")))?;
            if let Some(s) = &structured {
                m = s.hstack(&m).map_err(CliError::runtime)?;
            }
            let name = feature_file(rep);
            m.write_csv(&dir.join(&name)).map_err(CliError::runtime)?;
            files.push(name);
            if i == 0 {
                files.push(write_output(dir, "vocabulary.csv", fitted.vocabulary().to_csv())?);
            }
            if rep == Representation::Word2vec {
                if let Some(t) = fitted.embedding_table() {
                    files.push(write_output(dir, EMBEDDINGS_FILE, t.to_text())?);
                }
            }
        }
        Ok(files)
    })
}

fn load_features(ctx: &Context, rep: Representation) -> Result<(PathBuf, FeatureMatrix), CliError> {
    let p = ctx.require("featurize", &feature_file(rep))?;
    let m = FeatureMatrix::read_csv(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    Ok((p, m))
}

fn trace_stem(task: Task, rep: Representation) -> String {
    format!("{task}_{}_mrmr", rep.as_str())
}

pub fn select(ctx: &Context) -> Result<Outcome, CliError> {
    let products_path = products_input(ctx)?;
    let mut inputs = vec![("products".to_string(), products_path.clone())];
    for &rep in &ctx.config.representations {
        inputs.push((format!("features:{}", rep.as_str()), ctx.require("featurize", &feature_file(rep))?));
    }
    ctx.run_stage("select", &inputs, |dir| {
        let products = read_products(&products_path)?;
        let mut files = Vec::new();
        for &rep in &ctx.config.representations {
            let (_, x) = load_features(ctx, rep)?;
            for &task in &ctx.config.tasks {
                let y = targets(ctx, &products, task)?.as_f64();
                let target = discretize_target(&y, task).map_err(CliError::runtime)?;
                let m = ctx.config.raw.mrmr.top.unwrap_or(x.n_cols());
                let trace = mrmr_select(&x, &target, m, ctx.config.raw.mrmr.bins)
                    .map_err(|e| CliError::Runtime(format!("{task} {rep}: {e}")))?;
                let stem = trace_stem(task, rep);
                files.push(write_output(dir, &format!("{stem}.csv"), trace.to_csv())?);
                let json = serde_json::to_string(&trace).expect("trace serializes");
                files.push(write_output(dir, &format!("{stem}.json"), json)?);
            }
        }
        Ok(files)
    })
}

fn model_file(task: Task, rep: Representation, family: dataprice_core::models::Family) -> String {
    format!("{task}_{}_{}.json", rep.as_str(), family.as_str())
}

pub fn train(ctx: &Context) -> Result<Outcome, CliError> {
    let products_path = products_input(ctx)?;
    let mut inputs = vec![("products".to_string(), products_path.clone())];
    for &rep in &ctx.config.representations {
        inputs.push((format!("features:{}", rep.as_str()), ctx.require("featurize", &feature_file(rep))?));
        if ctx.config.raw.mrmr.top.is_some() {
            for &task in &ctx.config.tasks {
                let name = format!("{}.json", trace_stem(task, rep));
                inputs.push((format!("selection:{name}"), ctx.require("select", &name)?));
            }
        }
    }
    ctx.run_stage("train", &inputs, |dir| {
        use rayon::prelude::*;
        let products = read_products(&products_path)?;
        let mut files = Vec::new();
        for &rep in &ctx.config.representations {
            let (_, full) = load_features(ctx, rep)?;
            for &task in &ctx.config.tasks {
                let t = targets(ctx, &products, task)?;
                let n_classes = if task == Task::Classification { 5 } else { 0 };
                let x = if ctx.config.raw.mrmr.top.is_some() {
                    let path = ctx.require("select", &format!("{}.json", trace_stem(task, rep)))?;
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                    let trace: SelectionTrace = serde_json::from_str(&text).map_err(CliError::runtime)?;
                    let mut cols = trace.selected();
                    cols.sort_unstable();
                    full.select_columns(&cols)
                } else {
                    full.clone()
                };
                let y = t.as_f64();
                let fitted: Vec<(String, Result<TrainedModel, String>)> = ctx
                    .config
                    .families
                    .par_iter()
                    .map(|&family| {
                        let seed = mix_path(ctx.config.raw.seed, &[200, task_index(task), rep as u64, family as u64]);
                        let r = TrainedModel::fit(&ctx.config.spec(family), task, &x, &y, n_classes, seed)
                            .map_err(|e| format!("{task} {rep} {family}: {e}"));
                        (model_file(task, rep, family), r)
                    })
                    .collect();
                for (name, model) in fitted {
                    let model = model.map_err(CliError::Runtime)?;
                    files.push(write_output(dir, &name, model.to_json())?);
                }
            }
        }
        Ok(files)
    })
}

pub fn evaluate(ctx: &Context) -> Result<Outcome, CliError> {
    let products_path = products_input(ctx)?;
    let mut inputs = vec![("products".into(), products_path.clone())];
    doc_vector_inputs(ctx, &mut inputs)?;
    ctx.run_stage("evaluate", &inputs, |dir| {
        let products = read_products(&products_path)?;
        let vectors = doc_vectors(ctx)?;
        let grid = ctx.config.grid();
        let specs = ctx.config.specs();
        let mut files = Vec::new();
        for &task in &ctx.config.tasks {
            let t = targets(ctx, &products, task)?;
            let mut data = Dataset::new(&products, &t, &grid).map_err(CliError::runtime)?;
            if let Some(v) = &vectors {
                data = data.with_doc_vectors(v);
            }
            let report = run_grid(&data, &ctx.config.representations, &specs, &grid, ctx.config.raw.seed)
                .map_err(CliError::runtime)?;
            for f in &report.failures {
                log::warn!("{task}: {f}");
            }
            files.push(write_output(dir, &format!("report_{task}.txt"), report.to_text())?);
            files.push(write_output(dir, &format!("report_{task}.csv"), report.to_csv())?);
        }
        Ok(files)
    })
}

pub fn curve(ctx: &Context) -> Result<Outcome, CliError> {
    let products_path = products_input(ctx)?;
    let mut inputs = vec![("products".into(), products_path.clone())];
    doc_vector_inputs(ctx, &mut inputs)?;
    ctx.run_stage("curve", &inputs, |dir| {
        let products = read_products(&products_path)?;
        let vectors = doc_vectors(ctx)?;
        let grid = ctx.config.grid();
        let spec = ctx.config.spec(ctx.config.curve_family);
        let mut files = Vec::new();
        for &task in &ctx.config.tasks {
            let t = targets(ctx, &products, task)?;
            let mut data = Dataset::new(&products, &t, &grid).map_err(CliError::runtime)?;
            if let Some(v) = &vectors {
                data = data.with_doc_vectors(v);
            }
            let table = feature_curve(
                &data,
                ctx.config.curve_representation,
                &spec,
                &ctx.config.raw.mrmr.curve,
                &grid,
                ctx.config.raw.seed,
            )
            .map_err(CliError::runtime)?;
            files.push(write_output(dir, &format!("curve_{task}.csv"), table.to_csv())?);
            for (k, trace) in table.traces.iter().enumerate() {
                files.push(write_output(dir, &format!("curve_{task}_fold{k}_mrmr.csv"), trace.to_csv())?);
            }
        }
        Ok(files)
    })
}

/// `count` row indices spread evenly over `0..n`, starting at `offset`
/// times the stride.
fn spread_rows(n: usize, count: usize, offset: f64) -> Vec<usize> {
    let count = count.min(n);
    let stride = n as f64 / count as f64;
    let mut rows: Vec<usize> = (0..count).map(|i| (((i as f64 + offset) * stride) as usize).min(n - 1)).collect();
    rows.dedup();
    rows
}

pub fn explain(ctx: &Context) -> Result<Outcome, CliError> {
    let rep = ctx.config.explain_representation;
    let family = ctx.config.explain_family;
    let mut inputs = vec![("features".to_string(), ctx.require("featurize", &feature_file(rep))?)];
    for &task in &ctx.config.tasks {
        let name = model_file(task, rep, family);
        inputs.push((format!("model:{name}"), ctx.require("train", &name)?));
    }
    let embeddings = if rep == Representation::Word2vec {
        let p = ctx.require("featurize", EMBEDDINGS_FILE)?;
        inputs.push(("embeddings".into(), p.clone()));
        Some(p)
    } else {
        None
    };
    ctx.run_stage("explain", &inputs, |dir| {
        let (_, full) = load_features(ctx, rep)?;
        let table = match &embeddings {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Some(EmbeddingTable::from_text(&text).map_err(CliError::runtime)?)
            }
            None => None,
        };
        let e = &ctx.config.raw.explain;
        let mut files = Vec::new();
        for &task in &ctx.config.tasks {
            let path = ctx.require("train", &model_file(task, rep, family))?;
            let model = TrainedModel::load_for(&path, task).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            let cols: Vec<usize> = model
                .manifest
                .iter()
                .map(|name| {
                    full.names().iter().position(|n| n == name).ok_or_else(|| {
                        CliError::Runtime(format!("model column {name} is missing from the featurized matrix; rerun `dataprice train`"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let x = full.select_columns(&cols);
            let sample = x.select_rows(&spread_rows(x.n_rows(), e.sample, 0.0));
            let background: Vec<Vec<f64>> =
                spread_rows(x.n_rows(), e.background, 0.5).into_iter().map(|r| x.row(r).to_vec()).collect();
            let kcfg = KernelShapConfig { n_coalitions: e.coalitions, seed: mix_path(ctx.config.raw.seed, &[300, task_index(task)]) };
            let gi = global_importance(&model, &sample, &background, &kcfg)
                .map_err(|err| CliError::Runtime(format!("{task} explanation: {err}")))?;
            files.push(write_output(dir, &format!("importance_{task}.csv"), gi.to_csv())?);
            let top = GlobalImportance { ranking: gi.top(e.top).to_vec(), ..gi.clone() };
            files.push(write_output(dir, &format!("beeswarm_{task}.csv"), top.beeswarm_csv())?);
            let mut kw = String::new();
            if let Some(t) = &table {
                for (_, name, _) in gi.top(e.top) {
                    if let Some(d) = embedding_dim_of(name) {
                        let profile = embedding_keywords(t, d, e.keywords).map_err(CliError::runtime)?;
                        kw.push_str(&profile.to_text());
                    }
                }
            }
            if kw.is_empty() {
                kw.push_str("no embedding dimensions among the top features\n");
            }
            files.push(write_output(dir, &format!("keywords_{task}.txt"), kw)?);
        }
        Ok(files)
    })
}

fn figure_number(task: Task, regression: &str, classification: &str) -> String {
    match task {
        Task::Regression => regression.to_string(),
        Task::Classification => classification.to_string(),
    }
}

/// Collect the stage outputs into one directory. Refuses artifacts whose
/// manifest names another config hash.
pub fn report(ctx: &Context) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let mut present = Vec::new();
    for stage in ["ingest", "evaluate", "curve", "explain"] {
        let dir = ctx.stage_dir(stage);
        let Some(m) = Manifest::load(&dir) else {
            if stage == "evaluate" {
                return Err(CliError::Missing { artifact: dir.join(crate::manifest::MANIFEST_FILE).display().to_string(), command: stage.into() });
            }
            log::warn!("report: no {stage} artifacts; section skipped");
            continue;
        };
        if m.config_hash != ctx.config_hash {
            return Err(CliError::Validation(format!(
                "{stage} artifacts come from config {} but the current config is {}; rerun `dataprice {stage}`",
                &m.config_hash[..12],
                &ctx.config_hash[..12]
            )));
        }
        for name in m.outputs.keys() {
            inputs.push((format!("{stage}/{name}"), dir.join(name)));
        }
        present.push(stage);
    }
    ctx.run_stage("report", &inputs, |dir| {
        let read = |stage: &str, name: &str| -> Result<String, CliError> {
            let p = ctx.require(stage, name)?;
            std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
        };
        let mut files = Vec::new();
        let mut text = String::new();
        if present.contains(&"ingest") {
            let d = read("ingest", "describe.csv")?;
            let _ = writeln!(text, "Descriptive statistics\n{d}");
            files.push(write_output(dir, "table2_descriptive.csv", d)?);
            files.push(write_output(dir, "fig1_price_histogram.csv", read("ingest", "price_histogram.csv")?)?);
        }
        for &task in &ctx.config.tasks {
            let table = figure_number(task, "table4", "table5");
            let t = read("evaluate", &format!("report_{task}.txt"))?;
            text.push_str(&t);
            text.push('\n');
            files.push(write_output(dir, &format!("{table}_{task}.txt"), t)?);
            files.push(write_output(dir, &format!("{table}_{task}.csv"), read("evaluate", &format!("report_{task}.csv"))?)?);
            if present.contains(&"curve") {
                let fig = figure_number(task, "fig2", "fig4");
                let c = read("curve", &format!("curve_{task}.csv"))?;
                let _ = writeln!(
                    text,
                    "Metrics by number of mRMR features ({}, {} {task})\n{c}",
                    ctx.config.curve_representation.display_name(),
                    ctx.config.curve_family.display_name(task)
                );
                files.push(write_output(dir, &format!("{fig}_mrmr_{task}.csv"), c)?);
            }
            if present.contains(&"explain") {
                let fig = figure_number(task, "fig3", "fig5");
                let imp = read("explain", &format!("importance_{task}.csv"))?;
                let top: Vec<&str> = imp.lines().take(ctx.config.raw.explain.top + 1).collect();
                let _ = writeln!(
                    text,
                    "Mean |SHAP| ranking ({}, {} {task})\n{}\n",
                    ctx.config.explain_representation.display_name(),
                    ctx.config.explain_family.display_name(task),
                    top.join("\n")
                );
                let _ = writeln!(text, "{}", read("explain", &format!("keywords_{task}.txt"))?);
                files.push(write_output(dir, &format!("{fig}_shap_{task}.csv"), read("explain", &format!("beeswarm_{task}.csv"))?)?);
                files.push(write_output(dir, &format!("{fig}_importance_{task}.csv"), imp)?);
            }
        }
        files.push(write_output(dir, "report.txt", text)?);
        Ok(files)
    })
}

/// Every stage in order.
pub fn run_all(ctx: &Context) -> Result<(), CliError> {
    ingest(ctx)?;
    if ctx.config.raw.annotate.enabled {
        annotate(ctx)?;
    }
    featurize(ctx)?;
    select(ctx)?;
    train(ctx)?;
    evaluate(ctx)?;
    curve(ctx)?;
    explain(ctx)?;
    report(ctx)?;
    Ok(())
}

/// Synthetic listings with planted topic structure. `strip_industry` drops
/// the industry scores so that `annotate` has to fill them in.
pub fn generate_products(n: usize, seed: u64, strip_industry: bool) -> Vec<DataProduct> {
    let mut products = generate(&SynthConfig { n, seed, ..SynthConfig::default() });
    if strip_industry {
        for p in &mut products {
            p.industry_scores = None;
        }
    }
    products
}

pub fn write_products(products: &[DataProduct], path: &Path) -> Result<(), CliError> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mut buf = Vec::new();
            dataprice_core::corpus::write_csv(products, &mut buf).map_err(CliError::runtime)?;
            buf
        }
        _ => products_bytes(products)?,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
