use dataprice_core::featsel::{categorical, discretize, mrmr_select, mutual_information, DiscretizedColumn};
use dataprice_core::rng::rng_from;
use dataprice_core::FeatureMatrix;
use proptest::prelude::*;
use rand::Rng;
use std::collections::HashMap;

/// Plug-in MI from hash-map counts.
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

/// Equal-frequency labels by the rank rule, compacted, written independently.
fn bin_oracle(col: &[f64], bins: usize) -> Vec<u32> {
    let n = col.len();
    let mut distinct: Vec<f64> = col.to_vec();
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
    let mut used: Vec<usize> = raw.clone();
    used.sort_unstable();
    used.dedup();
    raw.iter().map(|r| used.iter().position(|u| u == r).unwrap() as u32).collect()
}

/// Greedy Eq.-18 selection recomputed from scratch at every step.
fn brute_force_mrmr(cols: &[Vec<u32>], target: &[u32], m: usize) -> Vec<(usize, f64)> {
    let mut selected: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for _ in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols.len() {
            if selected.contains(&j) {
                continue;
            }
            let rel = mi_oracle(&cols[j], target);
            let red = if selected.is_empty() {
                0.0
            } else {
                selected.iter().map(|&s| mi_oracle(&cols[j], &cols[s])).sum::<f64>() / selected.len() as f64
            };
            let score = rel - red;
            if best.is_none() || score > best.unwrap().1 + 1e-12 {
                best = Some((j, score));
            }
        }
        let (j, s) = best.unwrap();
        selected.push(j);
        out.push((j, s));
    }
    out
}

fn random_problem(seed: u64, rows: usize, features: usize) -> (FeatureMatrix, DiscretizedColumn) {
    let mut rng = rng_from(seed);
    let target: Vec<usize> = (0..rows).map(|_| rng.random_range(0..5)).collect();
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..features)
                .map(|j| {
                    let signal = target[i] as f64 * (j % 4) as f64;
                    let noise: f64 = rng.random::<f64>() * (1 + j) as f64;
                    if j % 3 == 2 { (signal + noise).round() } else { signal + noise }
                })
                .collect()
        })
        .collect();
    (FeatureMatrix::from_rows(&data), categorical(&target))
}

#[test]
fn greedy_trace_matches_brute_force() {
    for seed in 0..5 {
        let (x, target) = random_problem(seed, 200, 10);
        let trace = mrmr_select(&x, &target, 10, 10).unwrap();
        let cols: Vec<Vec<u32>> = (0..10).map(|j| bin_oracle(&x.column(j), 10)).collect();
        let want = brute_force_mrmr(&cols, &target.labels, 10);
        let got: Vec<usize> = trace.selected();
        assert_eq!(got, want.iter().map(|w| w.0).collect::<Vec<_>>(), "seed {seed}");
        for (step, (_, score)) in trace.steps.iter().zip(&want) {
            assert!((step.score - score).abs() < 1e-10);
            assert!((step.relevance - step.redundancy - step.score).abs() < 1e-12);
        }
    }
}

#[test]
fn discretize_examples() {
    let col: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(discretize(&col, 5).unwrap().labels, bin_oracle(&col, 5));
    assert_eq!(discretize(&col, 5).unwrap().labels, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    let d = discretize(&[0.0, 1.0, 1.0, 0.0], 10).unwrap();
    assert_eq!((d.labels, d.bins), (vec![0, 1, 1, 0], 2));
}

#[test]
fn mutual_information_examples() {
    let u = categorical(&(0..1000).map(|i| i % 2).collect::<Vec<_>>());
    assert!((mutual_information(&u, &u).unwrap() - 2f64.ln()).abs() < 1e-12);
    let c = categorical(&[0; 1000]);
    assert_eq!(mutual_information(&u, &c).unwrap(), 0.0);
    let mut rng = rng_from(5);
    let a = categorical(&(0..10_000).map(|_| rng.random_range(0..2)).collect::<Vec<_>>());
    let b = categorical(&(0..10_000).map(|_| rng.random_range(0..2)).collect::<Vec<_>>());
    assert!(mutual_information(&a, &b).unwrap() < 0.02);
    assert!(mutual_information(&a, &categorical(&[0; 3])).is_err());
}

#[test]
fn duplicate_feature_loses_to_independent_relevance() {
    let mut rng = rng_from(1);
    let target: Vec<usize> = (0..400).map(|_| rng.random_range(0..4)).collect();
    let f1: Vec<f64> = target.iter().map(|&t| t as f64).collect();
    let f2: Vec<f64> = target.iter().map(|&t| if rng.random::<f64>() < 0.5 { t as f64 } else { rng.random_range(0..4) as f64 }).collect();
    let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![f1[i], f2[i], f1[i]]).collect();
    let x = FeatureMatrix::from_rows(&rows);
    let trace = mrmr_select(&x, &categorical(&target), 2, 10).unwrap();
    assert_eq!(trace.selected(), vec![0, 1]);
    // copy of the target then independent noise
    let noise: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
    let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![f1[i], noise[i]]).collect();
    let trace = mrmr_select(&FeatureMatrix::from_rows(&rows), &categorical(&target), 2, 10).unwrap();
    assert_eq!(trace.selected(), vec![0, 1]);
    let trace = mrmr_select(&FeatureMatrix::from_rows(&rows), &categorical(&target), 1, 10).unwrap();
    assert_eq!(trace.selected(), vec![0]);
    // more than available clamps
    assert_eq!(mrmr_select(&FeatureMatrix::from_rows(&rows), &categorical(&target), 9, 10).unwrap().steps.len(), 2);
}

#[test]
fn trace_csv_header() {
    let (x, t) = random_problem(3, 50, 3);
    let csv = mrmr_select(&x, &t, 2, 10).unwrap().to_csv();
    assert!(csv.starts_with("step,feature,relevance,redundancy,score\n"));
    assert_eq!(csv.lines().count(), 3);
}

proptest! {
    #[test]
    fn mi_is_symmetric_and_bounded_by_entropy(u in prop::collection::vec(0usize..4, 1..80), seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let v: Vec<usize> = u.iter().map(|_| rng.random_range(0..3)).collect();
        let (cu, cv) = (categorical(&u), categorical(&v));
        let uv = mutual_information(&cu, &cv).unwrap();
        prop_assert_eq!(uv, mutual_information(&cv, &cu).unwrap());
        prop_assert!(uv >= -1e-12);
        let h = mutual_information(&cu, &cu).unwrap();
        prop_assert!((h - mi_oracle(&cu.labels, &cu.labels)).abs() < 1e-12);
        prop_assert!(uv <= h + 1e-12);
    }

    #[test]
    fn binning_matches_oracle(col in prop::collection::vec(-20i32..20, 1..60), bins in 1usize..12) {
        let col: Vec<f64> = col.iter().map(|&v| f64::from(v) * 0.5).collect();
        let d = discretize(&col, bins).unwrap();
        prop_assert_eq!(&d.labels, &bin_oracle(&col, bins));
        prop_assert!(d.labels.iter().all(|&l| (l as usize) < d.bins));
        prop_assert!(d.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn selection_invariant_to_monotone_transforms(seed in 0u64..50) {
        let (x, t) = random_problem(seed, 120, 6);
        let rows: Vec<Vec<f64>> = x.rows().map(|r| r.iter().enumerate().map(|(j, v)| if j % 2 == 0 { v.exp() } else { 3.0 * v - 7.0 }).collect()).collect();
        let y = FeatureMatrix::from_rows(&rows);
        let a = mrmr_select(&x, &t, 6, 10).unwrap();
        let b = mrmr_select(&y, &t, 6, 10).unwrap();
        prop_assert_eq!(a.selected(), b.selected());
    }
}
