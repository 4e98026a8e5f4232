use dataprice_core::rng::rng_from;
use dataprice_core::textrep::{
    bow, c_tf_idf, cluster_features, lda_features, pair_gradient, tfidf, tokenize, train_lda, ClusterConfig,
    ClusterTopics, FittedText, LdaConfig, Representation, TextRepConfig, Vocabulary,
};
use proptest::prelude::*;
use rand::Rng;
use std::collections::{BTreeSet, HashMap};

fn docs(texts: &[&str]) -> Vec<Vec<String>> {
    texts.iter().map(|t| tokenize(t)).collect()
}

/// TF-IDF straight from the definitions, with no shared code.
fn tfidf_oracle(docs: &[Vec<String>], terms: &[String]) -> Vec<Vec<f64>> {
    let n = docs.len() as f64;
    docs.iter()
        .map(|d| {
            let in_vocab = d.iter().filter(|t| terms.contains(t)).count() as f64;
            terms
                .iter()
                .map(|term| {
                    let count = d.iter().filter(|t| *t == term).count() as f64;
                    let df = docs.iter().filter(|doc| doc.contains(term)).count() as f64;
                    if in_vocab == 0.0 {
                        0.0
                    } else {
                        count / in_vocab * (n / (1.0 + df)).ln()
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn tokenizer_examples() {
    assert_eq!(tokenize("Data, price!"), vec!["data", "price"]);
    assert!(tokenize("a I x").is_empty());
    assert_eq!(tokenize("COVID-19 data"), vec!["covid", "data"]);
}

#[test]
fn tfidf_three_document_hand_oracle() {
    let d = docs(&["data price data", "price model", "market data weather model model"]);
    let v = Vocabulary::build(&d, 500).unwrap();
    let m = tfidf(&d, &v);
    let want = tfidf_oracle(&d, v.terms());
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            assert!((m.get(i, j) - w).abs() < 1e-12, "({i},{j}) {} vs {w}", m.get(i, j));
        }
    }
    // data: tf 2/3 in doc 0, df 2 of 3
    let j = v.id("data").unwrap();
    assert!((m.get(0, j) - 2.0 / 3.0 * (3.0f64 / 3.0).ln()).abs() < 1e-12);
}

#[test]
fn tfidf_two_document_example_is_negative() {
    let d = docs(&["data price", "data model"]);
    let v = Vocabulary::build(&d, 500).unwrap();
    let m = tfidf(&d, &v);
    let got = m.get(0, v.id("data").unwrap());
    assert!((got - 0.5 * (2.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((got + 0.2027).abs() < 1e-4);
}

#[test]
fn vocabulary_caps_with_lexicographic_ties() {
    let words: Vec<String> = (0..600).map(|i| format!("w{i:04}")).collect();
    let v = Vocabulary::build(&[words.clone()], 500).unwrap();
    let mut oracle = words;
    oracle.sort();
    oracle.truncate(500);
    assert_eq!(v.terms(), oracle.as_slice());
    let v = Vocabulary::build(&docs(&["ab ab"]), 500).unwrap();
    assert_eq!(v.terms(), ["ab".to_string()]);
    let v = Vocabulary::build(&docs(&["data price data", "price model data"]), 500).unwrap();
    assert_eq!(v.terms(), ["data", "price", "model"]);
}

#[test]
fn bow_counts_and_empty_rows() {
    let d = docs(&["data price data", "", "zebra"]);
    let v = Vocabulary::from_parts(
        vec!["data".into(), "price".into(), "model".into()],
        vec![2, 1, 0],
        vec![1, 1, 0],
        3,
    );
    let m = bow(&d, &v);
    assert_eq!(m.row(0), [2.0, 1.0, 0.0]);
    assert_eq!(m.row(1), [0.0; 3]);
    assert_eq!(m.row(2), [0.0; 3]);
    // df 0 gives idf ln(N)
    assert!((v.idf()[2] - 3f64.ln()).abs() < 1e-15);
}

fn max_rel_err(a: &[f64], n: &[f64]) -> f64 {
    a.iter().zip(n).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4)).fold(0.0, f64::max)
}

#[test]
fn skipgram_gradient_matches_finite_differences() {
    let mut rng = rng_from(42);
    let d = 8;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut vecs: Vec<Vec<f64>> = (0..7).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let loss = |v: &[Vec<f64>]| {
            let negs: Vec<&[f64]> = v[2..].iter().map(Vec::as_slice).collect();
            pair_gradient(&v[0], &v[1], &negs).loss
        };
        let g = {
            let negs: Vec<&[f64]> = vecs[2..].iter().map(Vec::as_slice).collect();
            pair_gradient(&vecs[0], &vecs[1], &negs)
        };
        let analytic: Vec<f64> =
            g.center.iter().chain(&g.context).chain(g.negatives.iter().flatten()).copied().collect();
        let mut numeric = Vec::new();
        for b in 0..vecs.len() {
            for k in 0..d {
                let orig = vecs[b][k];
                vecs[b][k] = orig + h;
                let up = loss(&vecs);
                vecs[b][k] = orig - h;
                let down = loss(&vecs);
                vecs[b][k] = orig;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

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

fn planted_corpus(seed: u64) -> Vec<Vec<String>> {
    let mut rng = rng_from(seed);
    (0..500)
        .map(|_| {
            let share_a: f64 = rng.random();
            (0..40).map(|_| if rng.random::<f64>() < share_a { draw(&mut rng, &TOPIC_A) } else { draw(&mut rng, &TOPIC_B) }).collect()
        })
        .collect()
}

fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[test]
fn lda_recovers_planted_topics() {
    for seed in [1, 2, 3] {
        let corpus = planted_corpus(seed);
        let vocab = Vocabulary::build(&corpus, 500).unwrap();
        let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
        let cfg = LdaConfig { topics: 2, iterations: 300, seed, ..Default::default() };
        let model = train_lda(&encoded, vocab.len(), &cfg).unwrap();
        let truth: Vec<Vec<f64>> = [TOPIC_A, TOPIC_B]
            .iter()
            .map(|words| {
                vocab.terms().iter().map(|t| words.iter().position(|w| w == t).map_or(0.0, |i| WEIGHTS[i])).collect()
            })
            .collect();
        let straight = (total_variation(&model.phi[0], &truth[0]) + total_variation(&model.phi[1], &truth[1])) / 2.0;
        let swapped = (total_variation(&model.phi[0], &truth[1]) + total_variation(&model.phi[1], &truth[0])) / 2.0;
        assert!(straight.min(swapped) < 0.15, "seed {seed}: {straight} / {swapped}");
        for row in model.phi.iter().chain(&model.theta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn single_topic_features_are_constant_one() {
    let corpus = docs(&["data price", "model data", "market"]);
    let vocab = Vocabulary::build(&corpus, 500).unwrap();
    let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
    let model = train_lda(&encoded, vocab.len(), &LdaConfig { topics: 1, iterations: 5, ..Default::default() }).unwrap();
    let f = lda_features(&model.theta);
    assert!(f.column(0).iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert!(train_lda(&encoded, vocab.len(), &LdaConfig { topics: vocab.len() + 1, ..Default::default() }).is_err());
}

#[test]
fn topic_feature_argmax_and_ties() {
    let f = cluster_features(&[vec![0.2, 0.8], vec![0.5, 0.5]]);
    assert_eq!(f.row(0), [0.2, 0.8, 1.0]);
    assert_eq!(f.row(1), [0.5, 0.5, 0.0]);
}

#[test]
fn c_tf_idf_two_cluster_fixture() {
    let corpus = docs(&[
        "data data data price",
        "data data",
        "data data data model model model model",
        "data data model model model model model",
    ]);
    let vocab = Vocabulary::build(&corpus, 500).unwrap();
    let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
    let vectors = vec![vec![0.0, 0.0], vec![0.0, 0.1], vec![10.0, 10.0], vec![10.0, 10.1]];
    let cfg = ClusterConfig { reduce_dims: 2, n_clusters: 2, outlier_quantile: 1.0, ..Default::default() };
    let topics = ClusterTopics::fit(&vectors, &encoded, vocab.terms(), &cfg).unwrap();
    assert_eq!(topics.labels[0], topics.labels[1]);
    assert_eq!(topics.labels[2], topics.labels[3]);
    assert_ne!(topics.labels[0], topics.labels[2]);
    let (c0, c1) = (topics.labels[0] as usize, topics.labels[2] as usize);
    // merged counts: cluster 0 = {data 5, price 1}, cluster 1 = {data 5, model 9}; A = 20 / 2
    let a = 10.0;
    let w = |c: usize, t: &str| topics.keyword_weights[c][vocab.id(t).unwrap()];
    assert!((w(c0, "data") - 5.0 * (1.0 + a / 10.0f64).ln()).abs() < 1e-12);
    assert!((w(c0, "price") - (1.0 + a / 1.0f64).ln()).abs() < 1e-12);
    assert_eq!(w(c0, "model"), 0.0);
    assert!((w(c1, "model") - 9.0 * (1.0 + a / 9.0f64).ln()).abs() < 1e-12);
    assert!((w(c1, "data") - 5.0 * 2f64.ln()).abs() < 1e-12);
    for p in &topics.membership {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn c_tf_idf_single_term_example() {
    // tf_{t,c} = 5, tf_t = 10 and A = 20
    let counts = vec![vec![5.0, 15.0], vec![5.0, 15.0]];
    let x = c_tf_idf(&counts);
    assert!((x[0][0] - 5.0 * 3f64.ln()).abs() < 1e-12);
    assert!((x[0][0] - 5.493).abs() < 1e-3);
}

#[test]
fn fold_vocabulary_never_leaks_test_terms() {
    let train = docs(&["secure market data feed", "weather archive daily", "market prices daily"]);
    let test = docs(&["unseenterm market", "zebra"]);
    let cfg = TextRepConfig::default();
    let (fitted, _) = FittedText::fit(Representation::Tfidf, &train, &cfg, 3, None).unwrap();
    let seen: BTreeSet<&String> = train.iter().flatten().collect();
    assert!(fitted.vocabulary().terms().iter().all(|t| seen.contains(t)));
    let m = fitted.transform(&test, None).unwrap();
    assert_eq!(m.row(1), vec![0.0; m.n_cols()].as_slice());
}

fn word_doc() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["data", "price", "model", "market", "feed", "zebra"]), 0..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bow_rows_count_in_vocabulary_tokens(corpus in prop::collection::vec(word_doc(), 1..6), cap in 1usize..6) {
        prop_assume!(corpus.iter().any(|d| !d.is_empty()));
        let v = Vocabulary::build(&corpus, cap).unwrap();
        let m = bow(&corpus, &v);
        for (i, d) in corpus.iter().enumerate() {
            let in_vocab = d.iter().filter(|t| v.id(t).is_some()).count() as f64;
            prop_assert_eq!(m.row(i).iter().sum::<f64>(), in_vocab);
        }
    }

    #[test]
    fn tfidf_matches_oracle_and_tf_rows_sum_to_one(corpus in prop::collection::vec(word_doc(), 1..6)) {
        prop_assume!(corpus.iter().any(|d| !d.is_empty()));
        let v = Vocabulary::build(&corpus, 500).unwrap();
        let m = tfidf(&corpus, &v);
        let want = tfidf_oracle(&corpus, v.terms());
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                prop_assert!((m.get(i, j) - w).abs() < 1e-12);
            }
            let counts = bow(&corpus, &v);
            let total: f64 = counts.row(i).iter().sum();
            if total > 0.0 {
                let tf_sum: f64 = counts.row(i).iter().map(|c| c / total).sum();
                prop_assert!((tf_sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_tf_idf_ignores_document_order(mut order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let corpus = docs(&["data feed data", "market feed", "model model data", "price data", "price price model", "feed"]);
        let vocab = Vocabulary::build(&corpus, 500).unwrap();
        let labels = [0usize, 1, 0, 1, 1, 0];
        let merged = |idx: &[usize]| {
            let mut counts = vec![vec![0.0; vocab.len()]; 2];
            for &i in idx {
                for t in vocab.encode(&corpus[i]) {
                    counts[labels[i]][t] += 1.0;
                }
            }
            c_tf_idf(&counts)
        };
        let base = merged(&(0..6).collect::<Vec<_>>());
        order.reverse();
        prop_assert_eq!(merged(&order), base);
    }
}

#[test]
fn featurizers_are_deterministic() {
    let corpus = planted_corpus(9)[..60].to_vec();
    let mut cfg = TextRepConfig::default();
    cfg.skipgram.dim = 12;
    cfg.lda.iterations = 30;
    cfg.lda.topics = 3;
    cfg.cluster.n_clusters = 3;
    let mut seen = HashMap::new();
    for rep in Representation::ALL {
        let (_, a) = FittedText::fit(rep, &corpus, &cfg, 5, None).unwrap();
        let (_, b) = FittedText::fit(rep, &corpus, &cfg, 5, None).unwrap();
        assert_eq!(a, b, "{rep:?}");
        seen.insert(rep.as_str(), a.n_cols());
    }
    assert_eq!(seen["word2vec"], 12);
    assert_eq!(seen["lda"], 3);
    assert_eq!(seen["bertopic"], 4);
}
