use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 7

[data]
path = "products.jsonl"

[features]
representations = ["bow", "tfidf", "lda"]

[features.lda]
topics = 4
iterations = 50

[models]
families = ["linear", "cart"]

[mrmr]
curve = [1, 3, 8]

[explain]
representation = "tfidf"
family = "cart"
sample = 10
background = 5
"#;

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::copy(fixtures.join("products.jsonl"), dir.path().join("products.jsonl")).unwrap();
    std::fs::write(dir.path().join("dataprice.toml"), config).unwrap();
    dir
}

fn dataprice(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dataprice")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dataprice(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, p: &str) -> Vec<u8> {
    std::fs::read(dir.join(p)).unwrap_or_else(|e| panic!("{p}: {e}"))
}

#[test]
fn stages_chain_and_rerun_is_a_no_op() {
    let ws = workspace(CONFIG);
    let d = ws.path();
    ok(d, &["ingest"]);
    ok(d, &["annotate"]);
    let first = ok(d, &["evaluate"]);
    assert!(first.contains("evaluate: wrote"), "{first}");

    let report = String::from_utf8(read(d, "out/evaluate/report_regression.txt")).unwrap();
    let header = report.lines().find(|l| l.starts_with("Method")).unwrap();
    assert!(header.ends_with("Rank"), "{header}");
    let csv = String::from_utf8(read(d, "out/evaluate/report_classification.csv")).unwrap();
    for metric in ["Accuracy", "F1-Score", "AUC"] {
        let mut ranks: Vec<u32> = csv
            .lines()
            .filter(|l| l.starts_with(&format!("{metric},")))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3], "{metric}");
    }

    let before = read(d, "out/evaluate/report_regression.csv");
    let again = ok(d, &["evaluate"]);
    assert!(again.contains("evaluate: up-to-date"), "{again}");
    assert_eq!(read(d, "out/evaluate/report_regression.csv"), before);
    let forced = ok(d, &["evaluate", "--force"]);
    assert!(forced.contains("evaluate: wrote"), "{forced}");
    assert_eq!(read(d, "out/evaluate/report_regression.csv"), before);
}

#[test]
fn unknown_model_family_names_the_field() {
    let ws = workspace(&CONFIG.replace(r#"["linear", "cart"]"#, r#"["linear", "cart", "catboost"]"#));
    let out = dataprice(ws.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("models.families[2]") && err.contains("catboost"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let ws = workspace(&CONFIG.replace("seed = 7", "seed = 7\nseeed = 8"));
    let out = dataprice(ws.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("seeed"), "{}", stderr_of(&out));
}

#[test]
fn missing_artifact_names_the_producing_command() {
    let ws = workspace(CONFIG);
    let out = dataprice(ws.path(), &["annotate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("dataprice ingest"), "{}", stderr_of(&out));
    ok(ws.path(), &["ingest"]);
    // with annotation enabled, later stages read the annotated products
    let out = dataprice(ws.path(), &["featurize"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("dataprice annotate"), "{}", stderr_of(&out));
}

#[test]
fn report_refuses_artifacts_from_another_config() {
    let ws = workspace(CONFIG);
    let d = ws.path();
    ok(d, &["ingest"]);
    ok(d, &["annotate"]);
    ok(d, &["evaluate"]);
    std::fs::write(d.join("dataprice.toml"), CONFIG.replace("seed = 7", "seed = 8")).unwrap();
    let out = dataprice(d, &["report"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
}

#[test]
fn usage_errors_exit_one() {
    let ws = workspace(CONFIG);
    assert_eq!(dataprice(ws.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(dataprice(ws.path(), &["--threads", "0", "ingest"]).status.code(), Some(1));
}

#[test]
fn generate_writes_the_requested_products() {
    let ws = workspace(CONFIG);
    ok(ws.path(), &["generate", "--n", "25", "--seed", "3", "--out", "synth.jsonl"]);
    let text = String::from_utf8(read(ws.path(), "synth.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 25);
    ok(ws.path(), &["generate", "--n", "25", "--seed", "3", "--out", "again.jsonl"]);
    assert_eq!(read(ws.path(), "again.jsonl"), text.into_bytes());
}
