//! Acceptance checks, one PASS/FAIL line per criterion. Oracles here are
//! written from the definitions and share no code with the library beyond the
//! function under test.

use dataprice_annotate::prompt::REFUND_LEVELS;
use dataprice_annotate::{
    annotate, build_prompt, fallback_annotate, industry_label, parse_industry, parse_refund, AnnotationRequest,
    Annotations, EndpointConfig, Kind,
};
use dataprice_core::eval::{binary_auc, macro_auc, regression_metrics};
use dataprice_core::explain::tree_shap;
use dataprice_core::explain::tree_shap_single;
use dataprice_core::featsel::{categorical, mrmr_select};
use dataprice_core::models::forest::{fit_forest, ForestParams};
use dataprice_core::models::gbt::{fit_gbt, leaf_weight, GbtParams, Loss};
use dataprice_core::models::linear::fit_linear;
use dataprice_core::models::mlp::{fit_mlp, Activation, Head, MlpParams};
use dataprice_core::models::svm::{fit_svc, Kernel, SvmParams};
use dataprice_core::models::tree::{fit_cart, CartParams, Criterion, Node, Tree};
use dataprice_core::models::{argmax, Family, ModelSpec, TrainedModel};
use dataprice_core::rng::rng_from;
use dataprice_core::synth::planted_columns;
use dataprice_core::textrep::{c_tf_idf, pair_gradient, tfidf, train_lda, LdaConfig, Vocabulary};
use dataprice_core::{FeatureMatrix, Task};
use rand::Rng;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Check {
    ensure!(elapsed.as_secs_f64() < limit_s, "took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64());
    Ok(String::new())
}

// 1 -------------------------------------------------------------------------

fn tfidf_oracle() -> Check {
    let texts = ["data price data", "price model", "market data weather model model"];
    // every word is lowercase, alphabetic and not a stopword, so whitespace
    // splitting is the tokenizer here
    let docs: Vec<Vec<String>> = texts.iter().map(|t| t.split_whitespace().map(String::from).collect()).collect();
    let vocab = Vocabulary::build(&docs, 500).map_err(|e| e.to_string())?;
    let m = tfidf(&docs, &vocab);
    let n = docs.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, d) in docs.iter().enumerate() {
        for (j, term) in vocab.terms().iter().enumerate() {
            let tf = d.iter().filter(|t| *t == term).count() as f64 / d.len() as f64;
            let df = docs.iter().filter(|doc| doc.contains(term)).count() as f64;
            worst = worst.max((m.get(i, j) - tf * (n / (1.0 + df)).ln()).abs());
        }
    }
    ensure!(worst < 1e-12, "max deviation {worst:e}");
    // by hand: "model" in doc 2 has tf 2/5 and df 2, so 0.4 * ln(1) = 0;
    // "weather" has tf 1/5 and df 1, so 0.2 * ln(1.5)
    let at = |i: usize, t: &str| m.get(i, vocab.id(t).unwrap());
    ensure!(at(2, "model").abs() < 1e-12, "model weight {}", at(2, "model"));
    ensure!((at(2, "weather") - 0.2 * 1.5f64.ln()).abs() < 1e-12, "weather weight {}", at(2, "weather"));
    Ok(format!("max deviation {worst:.1e}"))
}

// 2 -------------------------------------------------------------------------

fn skipgram_gradient() -> Check {
    let mut rng = rng_from(42);
    let (d, h) = (8, 1e-5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut v: Vec<Vec<f64>> = (0..7).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let grad = |v: &[Vec<f64>]| {
            let negs: Vec<&[f64]> = v[2..].iter().map(Vec::as_slice).collect();
            pair_gradient(&v[0], &v[1], &negs)
        };
        let g = grad(&v);
        let analytic: Vec<f64> = g.center.iter().chain(&g.context).chain(g.negatives.iter().flatten()).copied().collect();
        let mut k = 0;
        for b in 0..v.len() {
            for c in 0..d {
                let orig = v[b][c];
                v[b][c] = orig + h;
                let up = grad(&v).loss;
                v[b][c] = orig - h;
                let down = grad(&v).loss;
                v[b][c] = orig;
                let num = (up - down) / (2.0 * h);
                worst = worst.max((analytic[k] - num).abs() / analytic[k].abs().max(num.abs()).max(1e-4));
                k += 1;
            }
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:e}");
    Ok(format!("max relative error {worst:.1e} over 50 points"))
}

// 3 -------------------------------------------------------------------------

const TOPIC_A: [&str; 8] = ["apple", "banana", "cherry", "grape", "lemon", "mango", "peach", "plum"];
const TOPIC_B: [&str; 8] = ["anvil", "bolt", "chisel", "drill", "hammer", "nail", "saw", "wrench"];
const WEIGHTS: [f64; 8] = [0.3, 0.2, 0.15, 0.1, 0.1, 0.05, 0.05, 0.05];

fn draw(rng: &mut impl Rng, words: &[&str; 8]) -> String {
    let mut u = rng.random::<f64>();
    for (w, p) in words.iter().zip(WEIGHTS) {
        if u < p {
            return (*w).to_string();
        }
        u -= p;
    }
    words[7].to_string()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn lda_recovery() -> Check {
    let mut out = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut rng = rng_from(seed);
        let corpus: Vec<Vec<String>> = (0..500)
            .map(|_| {
                let share: f64 = rng.random();
                (0..40).map(|_| if rng.random::<f64>() < share { draw(&mut rng, &TOPIC_A) } else { draw(&mut rng, &TOPIC_B) }).collect()
            })
            .collect();
        let vocab = Vocabulary::build(&corpus, 500).map_err(|e| e.to_string())?;
        let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
        let model = train_lda(&encoded, vocab.len(), &LdaConfig { topics: 2, iterations: 300, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let truth: Vec<Vec<f64>> = [TOPIC_A, TOPIC_B]
            .iter()
            .map(|ws| vocab.terms().iter().map(|t| ws.iter().position(|w| w == t).map_or(0.0, |i| WEIGHTS[i])).collect())
            .collect();
        let straight = (total_variation(&model.phi[0], &truth[0]) + total_variation(&model.phi[1], &truth[1])) / 2.0;
        let swapped = (total_variation(&model.phi[0], &truth[1]) + total_variation(&model.phi[1], &truth[0])) / 2.0;
        let tv = straight.min(swapped);
        ensure!(tv < 0.15, "seed {seed}: mean total variation {tv:.4}");
        for row in model.phi.iter().chain(&model.theta) {
            let s: f64 = row.iter().sum();
            ensure!((s - 1.0).abs() < 1e-8, "seed {seed}: a row sums to {s}");
        }
        out.push(format!("{tv:.4}"));
    }
    Ok(format!("mean TV per seed {}", out.join(", ")))
}

// 4 -------------------------------------------------------------------------

fn c_tf_idf_hand() -> Check {
    // cluster 0 = {data 5, price 1}, cluster 1 = {data 5, model 9}
    let counts = vec![vec![5.0, 1.0, 0.0], vec![5.0, 0.0, 9.0]];
    let w = c_tf_idf(&counts);
    // A = 20 words / 2 clusters = 10; term totals 10, 1, 9
    let want = [
        [5.0 * (1.0f64 + 10.0 / 10.0).ln(), 1.0 * (1.0f64 + 10.0).ln(), 0.0],
        [5.0 * 2f64.ln(), 0.0, 9.0 * (1.0f64 + 10.0 / 9.0).ln()],
    ];
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        for t in 0..3 {
            worst = worst.max((w[c][t] - want[c][t]).abs());
        }
    }
    ensure!(worst < 1e-12, "max deviation {worst:e}");
    Ok(format!("max deviation {worst:.1e}"))
}

// 5 -------------------------------------------------------------------------

fn mi_oracle(u: &[u32], v: &[u32]) -> f64 {
    let n = u.len() as f64;
    let mut joint: HashMap<(u32, u32), f64> = HashMap::new();
    let mut pu: HashMap<u32, f64> = HashMap::new();
    let mut pv: HashMap<u32, f64> = HashMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pu.entry(a).or_default() += 1.0 / n;
        *pv.entry(b).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(a, b), &p)| p * (p / (pu[&a] * pv[&b])).ln()).sum()
}

/// Equal-frequency bins by rank, distinct values kept when there are few.
fn bin_oracle(col: &[f64], bins: usize) -> Vec<u32> {
    let n = col.len();
    let mut distinct = col.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let raw: Vec<usize> = col
        .iter()
        .map(|&x| {
            if distinct.len() <= bins {
                distinct.iter().position(|&d| d == x).unwrap()
            } else {
                bins * col.iter().filter(|&&y| y < x).count() / n
            }
        })
        .collect();
    let mut used = raw.clone();
    used.sort_unstable();
    used.dedup();
    raw.iter().map(|r| used.iter().position(|u| u == r).unwrap() as u32).collect()
}

fn mrmr_equivalence() -> Check {
    for seed in 0..5u64 {
        let mut rng = rng_from(seed);
        let target: Vec<usize> = (0..200).map(|_| rng.random_range(0..5)).collect();
        let data: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                (0..10)
                    .map(|j| {
                        let v = target[i] as f64 * (j % 4) as f64 + rng.random::<f64>() * (1 + j) as f64;
                        if j % 3 == 2 { v.round() } else { v }
                    })
                    .collect()
            })
            .collect();
        let x = FeatureMatrix::from_rows(&data);
        let t = categorical(&target);
        let trace = mrmr_select(&x, &t, 10, 10).map_err(|e| e.to_string())?;
        let cols: Vec<Vec<u32>> = (0..10).map(|j| bin_oracle(&x.column(j), 10)).collect();
        let mut chosen: Vec<usize> = Vec::new();
        for step in &trace.steps {
            let mut best: Option<(usize, f64)> = None;
            for j in (0..10).filter(|j| !chosen.contains(j)) {
                let rel = mi_oracle(&cols[j], &t.labels);
                let red = if chosen.is_empty() {
                    0.0
                } else {
                    chosen.iter().map(|&s| mi_oracle(&cols[j], &cols[s])).sum::<f64>() / chosen.len() as f64
                };
                if best.is_none_or(|b| rel - red > b.1 + 1e-12) {
                    best = Some((j, rel - red));
                }
            }
            let (j, score) = best.unwrap();
            ensure!(step.feature == j, "seed {seed}: step picks {} but the oracle picks {j}", step.feature);
            ensure!((step.score - score).abs() < 1e-10, "seed {seed}: score {} vs {score}", step.score);
            chosen.push(j);
        }
    }
    Ok("5 problems, 10 steps each".into())
}

// 6 -------------------------------------------------------------------------

fn model_suite() -> Check {
    let mut rng = rng_from(4);
    // linear: planted coefficients without noise
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let w = [0.5, -1.5, 3.0, 0.25];
    let y: Vec<f64> = x.iter().map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - 2.0).collect();
    let lin = fit_linear(&x, &y, 0.0).map_err(|e| e.to_string())?;
    let dev = lin.weights.iter().zip(w).map(|(a, b)| (a - b).abs()).fold((lin.bias + 2.0).abs(), f64::max);
    ensure!(dev < 1e-8, "linear coefficient error {dev:e}");

    // MLP: XOR
    let xx = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let xy = vec![0.0, 1.0, 1.0, 0.0];
    let params = MlpParams { hidden: vec![4], learning_rate: 0.5, epochs: 5000, batch_size: 4, activation: Activation::Tanh };
    let mlp = fit_mlp(&xx, &xy, Head::Softmax { classes: 2 }, &params, 3).map_err(|e| e.to_string())?;
    ensure!(xx.iter().zip(&xy).all(|(r, t)| argmax(&mlp.forward(r)) as f64 == *t), "MLP misclassifies XOR");

    // CART: step function
    let sx: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i) / 10.0 + 0.05]).collect();
    let sy: Vec<f64> = sx.iter().map(|r| f64::from(u8::from(r[0] > 0.5))).collect();
    let tree = fit_cart(&sx, &sy, Criterion::Mse, &CartParams { max_depth: 3, min_leaf: 1 }).map_err(|e| e.to_string())?;
    ensure!(sx.iter().zip(&sy).all(|(r, v)| tree.predict(r) == *v), "CART misses the step");
    ensure!(
        matches!(tree.nodes[0], Node::Split { threshold, .. } if (threshold - 0.5).abs() < 1e-12),
        "CART root threshold is not 0.5"
    );

    // SVM: two-point analytic solution w = 1, b = 0, and KKT on a noisy set
    let two = fit_svc(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0], &SvmParams { c: 1e6, kernel: Kernel::Linear, ..Default::default() })
        .map_err(|e| e.to_string())?;
    ensure!((two.linear_weights()[0] - 1.0).abs() < 1e-9 && two.bias.abs() < 1e-9, "two-point SVM w {:?} b {}", two.linear_weights(), two.bias);
    let mut kx = Vec::new();
    let mut ky = Vec::new();
    for i in 0..40 {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        kx.push(vec![s * 0.8 + rng.random_range(-1.5..1.5), s * 0.5 + rng.random_range(-1.5..1.5)]);
        ky.push(s);
    }
    let sp = SvmParams { c: 1.0, kernel: Kernel::Rbf { gamma: Some(0.5) }, tol: 1e-3, ..Default::default() };
    let svm = fit_svc(&kx, &ky, &sp).map_err(|e| e.to_string())?;
    let alpha: Vec<f64> = svm.dense_coef(kx.len()).iter().zip(&ky).map(|(c, t)| c * t).collect();
    for i in 0..kx.len() {
        let margin = ky[i] * svm.decision(&kx[i]);
        let ok = if alpha[i] <= 0.0 {
            margin >= 1.0 - sp.tol
        } else if alpha[i] < sp.c {
            (margin - 1.0).abs() <= sp.tol
        } else {
            margin <= 1.0 + sp.tol
        };
        ensure!(ok, "KKT violated at row {i}: alpha {} margin {margin}", alpha[i]);
    }

    // GBT: targets {1, 3} from a zero base with lambda 1 give leaf 4/3
    ensure!((leaf_weight(-4.0, 2.0, 1.0) - 4.0 / 3.0).abs() < 1e-9, "leaf weight formula");
    let gp = GbtParams { n_rounds: 1, learning_rate: 1.0, lambda: 1.0, base_score: Some(0.0), ..Default::default() };
    let gbt = fit_gbt(&[vec![0.0], vec![0.0]], &[1.0, 3.0], Loss::Squared, &gp).map_err(|e| e.to_string())?;
    let leaf = gbt.predict(&[0.0]);
    ensure!((leaf - 4.0 / 3.0).abs() < 1e-9, "GBT leaf {leaf}");

    // forest: identical fits under 1 and 4 worker threads
    let fy: Vec<f64> = x.iter().map(|r| r[0].sin() * 2.0 + r[1]).collect();
    let fp = ForestParams { n_trees: 20, ..Default::default() };
    let fit = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| fit_forest(&x, &fy, Criterion::Mse, &fp, 9))
    };
    let (a, b) = (fit(1).map_err(|e| e.to_string())?, fit(4).map_err(|e| e.to_string())?);
    ensure!(a == b, "forests differ across thread counts");
    Ok(format!("linear err {dev:.1e}, XOR solved, step split at 0.5, KKT ok, GBT leaf {leaf:.12}, forest identical"))
}

// 7 -------------------------------------------------------------------------

fn pairwise_auc(pos: &[bool], s: &[f64]) -> Option<f64> {
    let (mut good, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if pos[i] && !pos[j] {
                pairs += 1.0;
                good += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    (pairs > 0.0).then(|| good / pairs)
}

fn metric_oracles() -> Check {
    let m = regression_metrics(&[100.0, 200.0], &[110.0, 180.0]).map_err(|e| e.to_string())?;
    ensure!(m.mse == 250.0, "MSE {}", m.mse);
    ensure!((m.rmse - 15.8114).abs() < 1e-4, "RMSE {}", m.rmse);
    ensure!(m.mape.is_some_and(|v| (v - 0.1).abs() < 1e-12), "MAPE {:?}", m.mape);
    let mut rng = rng_from(12);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(10..=200);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..5).map(|c| (rng.random::<f64>() * 8.0).round() / 8.0 + if c == y[i] { 0.3 } else { 0.0 }).collect())
            .collect();
        let per: Vec<f64> = (0..5)
            .filter_map(|c| {
                let pos: Vec<bool> = y.iter().map(|&v| v == c).collect();
                let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
                debug_assert_eq!(pairwise_auc(&pos, &col).is_some(), binary_auc(&pos, &col).is_some());
                pairwise_auc(&pos, &col)
            })
            .collect();
        let want = per.iter().sum::<f64>() / per.len() as f64;
        let got = macro_auc(&y, &scores).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
    }
    ensure!(worst < 1e-12, "macro AUC deviation {worst:e}");
    Ok(format!("MSE {} RMSE {:.4} MAPE {:.3}; AUC deviation {worst:.1e}", m.mse, m.rmse, m.mape.unwrap()))
}

// 8 -------------------------------------------------------------------------

fn path_value(tree: &Tree, node: usize, x: &[f64], known: &[bool]) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value, .. } => value,
        Node::Split { feature, threshold, left, right, .. } => {
            if known[feature] {
                path_value(tree, if x[feature] <= threshold { left } else { right }, x, known)
            } else {
                let (cl, cr) = (tree.nodes[left].cover(), tree.nodes[right].cover());
                (cl * path_value(tree, left, x, known) + cr * path_value(tree, right, x, known)) / (cl + cr)
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn random_rows(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn tree_shap_checks() -> Check {
    let mut worst_enum: f64 = 0.0;
    for p in 1..=4usize {
        let x = random_rows(p as u64, 200, p);
        let y: Vec<f64> = x.iter().map(|r| r.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v.abs()).sum()).collect();
        let tree = fit_cart(&x, &y, Criterion::Mse, &CartParams { max_depth: 6, min_leaf: 3 }).map_err(|e| e.to_string())?;
        for probe in random_rows(100 + p as u64, 25, p) {
            let a = tree_shap_single(&tree, &probe);
            for i in 0..p {
                let mut phi = 0.0;
                for bits in 0u32..(1 << p) {
                    if bits >> i & 1 == 1 {
                        continue;
                    }
                    let mut known: Vec<bool> = (0..p).map(|j| bits >> j & 1 == 1).collect();
                    let s = bits.count_ones() as usize;
                    let w = factorial(s) * factorial(p - s - 1) / factorial(p);
                    let without = path_value(&tree, 0, &probe, &known);
                    known[i] = true;
                    phi += w * (path_value(&tree, 0, &probe, &known) - without);
                }
                worst_enum = worst_enum.max((a.phi[i] - phi).abs());
            }
        }
    }
    ensure!(worst_enum < 1e-8, "subset enumeration deviation {worst_enum:e}");
    let x = random_rows(1, 300, 4);
    let m = FeatureMatrix::from_rows(&x);
    let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + if r[1] > 0.0 { 1.5 } else { -0.5 } + r[0] * r[2]).collect();
    let mut worst_acc: f64 = 0.0;
    for family in [Family::Cart, Family::Forest, Family::Gbt] {
        let model = TrainedModel::fit(&ModelSpec::default_for(family), Task::Regression, &m, &y, 0, 3).map_err(|e| e.to_string())?;
        for r in random_rows(2, 100, 4) {
            let a = &tree_shap(&model, &r).map_err(|e| e.to_string())?[0];
            let err = (a.base + a.phi.iter().sum::<f64>() - model.predict_value(&r)).abs();
            worst_acc = worst_acc.max(err);
        }
    }
    ensure!(worst_acc < 1e-6, "local accuracy error {worst_acc:e}");
    Ok(format!("enumeration deviation {worst_enum:.1e}, local accuracy error {worst_acc:.1e}"))
}

// 9 and 11 ------------------------------------------------------------------

fn dataprice(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dataprice"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`dataprice {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

const SYNTH_CONFIG: &str = r#"
seed = 0
out_dir = "out"

[data]
path = "products.jsonl"

[models]
families = ["gbt"]

[mrmr]
top = 30
curve = [1, 2, 3, 4, 5, 6, 8, 10, 15, 20, 30, 40, 60, 80]
curve_representation = "tfidf"
curve_family = "gbt"

[explain]
representation = "tfidf"
family = "gbt"
"#;

/// `(metric, method) -> values` from a report CSV, last two columns being the
/// mean and the rank.
fn read_report_csv(text: &str) -> Vec<(String, String, Vec<String>)> {
    text.lines().skip(1).map(|l| {
        let f: Vec<&str> = l.split(',').collect();
        (f[0].to_string(), f[1].to_string(), f[2..].iter().map(|s| s.to_string()).collect())
    }).collect()
}

fn check_layout(txt: &str, csv: &str, task: Task) -> Result<(), String> {
    let (title, mean, metrics) = match task {
        Task::Regression => ("Regression results", "ME", ["MSE", "RMSE", "MAPE"]),
        Task::Classification => ("Classification results", "MR", ["Accuracy", "AUC", "F1-Score"]),
    };
    ensure!(txt.starts_with(title), "{task} report does not open with its title");
    let header = txt.lines().find(|l| l.starts_with("Method")).ok_or("no header row")?;
    ensure!(header.split_whitespace().rev().take(2).eq(["Rank", mean]), "{task} header ends wrong: {header}");
    for m in metrics {
        ensure!(txt.lines().any(|l| l.trim() == m), "{task} report lacks a {m} block");
    }
    let rows = read_report_csv(csv);
    for m in metrics {
        let mut ranks: Vec<usize> =
            rows.iter().filter(|r| r.0 == m).map(|r| r.2.last().unwrap().parse().unwrap_or(0)).collect();
        let n = ranks.len();
        ranks.sort_unstable();
        ensure!(n == 5 && ranks == (1..=n).collect::<Vec<_>>(), "{task} {m}: ranks {ranks:?} are not a permutation");
    }
    Ok(())
}

fn curve_rows(text: &str) -> Vec<(usize, Vec<f64>)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            let m = f.next().unwrap().parse().unwrap();
            (m, f.map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        })
        .collect()
}

/// Smallest m at which every fold's mRMR trace holds all planted columns.
fn planted_complete(dir: &Path, task: Task) -> Result<usize, String> {
    let planted = planted_columns();
    let mut need = 0;
    for k in 0..5 {
        let p = dir.join(format!("curve_{task}_fold{k}_mrmr.csv"));
        let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        let names: Vec<String> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().trim_matches('"').to_string()).collect();
        for c in &planted {
            let at = names.iter().position(|n| n == c).ok_or(format!("fold {k}: {c} never selected"))?;
            need = need.max(at + 1);
        }
    }
    Ok(need)
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    dataprice(&["generate", "--n", "600", "--seed", "0", "--out", "products.jsonl"], root)?;
    std::fs::write(root.join("dataprice.toml"), SYNTH_CONFIG).map_err(|e| e.to_string())?;
    dataprice(&["run"], root)?;
    let out = root.join("out");
    let read = |p: &str| std::fs::read_to_string(out.join(p)).map_err(|e| format!("{p}: {e}"));

    let prices: Vec<f64> = std::fs::read_to_string(root.join("products.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["price"].as_f64().unwrap().ln())
        .collect();
    let mean = prices.iter().sum::<f64>() / prices.len() as f64;
    let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / prices.len() as f64;

    let reg = read_report_csv(&read("report/table4_regression.csv")?);
    let cls = read_report_csv(&read("report/table5_classification.csv")?);
    let mse: f64 = reg.iter().find(|r| r.0 == "MSE" && r.1 == "TFIDF").ok_or("no TF-IDF MSE row")?.2[0].parse().map_err(|_| "bad MSE")?;
    let acc: f64 =
        cls.iter().find(|r| r.0 == "Accuracy" && r.1 == "TFIDF").ok_or("no TF-IDF accuracy row")?.2[0].parse().map_err(|_| "bad accuracy")?;
    let r2 = 1.0 - mse / var;
    ensure!(r2 > 0.8, "log-space R2 {r2:.4}");
    ensure!(acc >= 0.60, "5-tier accuracy {acc:.4}");

    check_layout(&read("report/table4_regression.txt")?, &read("report/table4_regression.csv")?, Task::Regression)?;
    check_layout(&read("report/table5_classification.txt")?, &read("report/table5_classification.csv")?, Task::Classification)?;

    let mut flat = Vec::new();
    for (task, file) in [(Task::Regression, "report/fig2_mrmr_regression.csv"), (Task::Classification, "report/fig4_mrmr_classification.csv")] {
        let need = planted_complete(&out.join("curve"), task)?;
        let rows = curve_rows(&read(file)?);
        let tail: Vec<&(usize, Vec<f64>)> = rows.iter().filter(|(m, _)| *m >= need).collect();
        ensure!(tail.len() >= 2, "{task}: curve has fewer than two points past m = {need}");
        let mut worst: f64 = 0.0;
        for w in tail.windows(2) {
            for (a, b) in w[0].1.iter().zip(&w[1].1) {
                worst = worst.max((b - a).abs() / a.abs());
            }
        }
        ensure!(worst < 0.05, "{task}: relative change {worst:.4} after all planted features (m >= {need})");
        flat.push(format!("{task} m>={need} max change {worst:.3}"));
    }
    Ok(format!("R2 {r2:.3}, accuracy {acc:.3}, layout ok, {}", flat.join(", ")))
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for f in ["products.jsonl", "config.toml"] {
        std::fs::copy(fixtures.join(f), root.join(f)).map_err(|e| e.to_string())?;
    }
    dataprice(&["--threads", "1", "run", "-c", "config.toml", "--out-dir", "one"], root)?;
    dataprice(&["--threads", "4", "run", "-c", "config.toml", "--out-dir", "four"], root)?;
    let (a, b) = (tree_bytes(&root.join("one")), tree_bytes(&root.join("four")));
    ensure!(a.len() == b.len(), "{} vs {} files", a.len(), b.len());
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        ensure!(pa == pb, "file sets differ at {}", pa.display());
        ensure!(ba == bb, "{} differs between 1 and 4 threads", pa.display());
    }
    ensure!(a.iter().any(|(p, _)| p.ends_with("report/report.txt")), "no report produced");
    Ok(format!("{} artifacts byte-identical across 1 and 4 threads", a.len()))
}

// 10 ------------------------------------------------------------------------

fn annotate_fixture(name: &str) -> Result<String, String> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../annotate/fixtures").join(name);
    std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
}

/// One-shot local chat endpoint answering with `content`.
fn mock_endpoint(content: String) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let l = line.trim_end().to_ascii_lowercase();
            if l.is_empty() {
                break;
            }
            if let Some(v) = l.strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let reply = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string();
        let mut w = stream;
        let head = format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", reply.len());
        w.write_all(head.as_bytes()).unwrap();
        w.write_all(reply.as_bytes()).unwrap();
    });
    url
}

fn annotation_fidelity() -> Check {
    let texts: Vec<String> = serde_json::from_str(&annotate_fixture("refund_batch_texts.json")?).map_err(|e| e.to_string())?;
    ensure!(build_prompt(Kind::Refund, &texts) == annotate_fixture("refund_batch_prompt.txt")?, "refund prompt differs from fixture");
    let example = annotate_fixture("industry_example_text.txt")?.trim_end().to_string();
    ensure!(
        build_prompt(Kind::Industry, std::slice::from_ref(&example)) == annotate_fixture("industry_example_prompt.txt")?,
        "industry prompt differs from fixture"
    );
    let refund = parse_refund(&annotate_fixture("refund_response.txt")?, 5).map_err(|e| e.to_string())?;
    ensure!(refund == vec![2, 0, 4, 1, 3], "refund parse {refund:?}");
    let industry = parse_industry(&annotate_fixture("industry_response.txt")?, 1).map_err(|e| e.to_string())?;
    ensure!(industry[0] == [0.1, 0.05, 0.05, 1.0, 0.1, 0.8, 0.05, 0.05, 0.05, 0.05, 0.6, 0.05], "industry parse {:?}", industry[0]);
    let mut exemplars = 0;
    for (level, (_, examples)) in REFUND_LEVELS.iter().enumerate() {
        for e in examples.iter() {
            let Annotations::Refund(l) = fallback_annotate(Kind::Refund, &[e.to_string()]) else { unreachable!() };
            ensure!(l[0] as usize == level, "exemplar {e:?} maps to {} not {level}", l[0]);
            exemplars += 1;
        }
    }
    let url = mock_endpoint("[2,0,4,1,3]".into());
    let endpoint = EndpointConfig { url, retries: 0, timeout_secs: 10.0, ..Default::default() };
    let live = annotate(&AnnotationRequest { kind: Kind::Refund, texts: texts.clone(), endpoint: Some(endpoint) }).map_err(|e| e.to_string())?;
    ensure!(live == Annotations::Refund(vec![2, 0, 4, 1, 3]), "mock endpoint round trip {live:?}");
    ensure!(industry_label(&industry[0]) == 3, "example label");
    Ok(format!("prompts byte-match, examples parse, {exemplars} exemplars mapped, mock round trip ok"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: Vec<(u32, &str, f64, fn() -> Check)> = vec![
        (1, "TF-IDF hand oracle", 1.0, tfidf_oracle),
        (2, "skip-gram gradient check", 10.0, skipgram_gradient),
        (3, "LDA planted-topic recovery", 60.0, lda_recovery),
        (4, "c-TF-IDF hand values", f64::INFINITY, c_tf_idf_hand),
        (5, "mRMR brute-force equivalence", 5.0, mrmr_equivalence),
        (6, "model sanity suite", 60.0, model_suite),
        (7, "metric oracles", f64::INFINITY, metric_oracles),
        (8, "TreeSHAP exactness and local accuracy", 30.0, tree_shap_checks),
        (9, "end-to-end synthetic reproduction", 300.0, end_to_end),
        (10, "annotation fidelity", f64::INFINITY, annotation_fidelity),
        (11, "determinism across --threads", f64::INFINITY, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| within(elapsed, limit).map(|_| detail));
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.2} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.2} s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
