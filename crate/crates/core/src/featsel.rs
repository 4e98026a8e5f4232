//! Maximum-relevance minimum-redundancy feature selection with plug-in mutual
//! information over equal-frequency bins.

use crate::matrix::{csv_field, FeatureMatrix};
use crate::Task;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FeatSelError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("must select at least one feature")]
    ZeroRequested,
    #[error("feature matrix has no columns")]
    NoFeatures,
}

/// Bin label per row. `edges[b]` is the largest value assigned to bin `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedColumn {
    pub labels: Vec<u32>,
    pub bins: usize,
    pub edges: Vec<f64>,
}

/// Equal-frequency binning into at most `bins` bins. A value's bin is
/// `floor(bins * (number of smaller values) / n)`, so tied values always share
/// a bin; empty bins are then dropped and labels renumbered. Columns with at
/// most `bins` distinct values keep one bin per value.
pub fn discretize(column: &[f64], bins: usize) -> Result<DiscretizedColumn, FeatSelError> {
    if let Some(i) = column.iter().position(|x| !x.is_finite()) {
        return Err(FeatSelError::NonFinite(i));
    }
    let n = column.len();
    if n == 0 {
        return Ok(DiscretizedColumn { labels: Vec::new(), bins: 0, edges: Vec::new() });
    }
    let bins = bins.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let distinct = 1 + order.windows(2).filter(|w| column[w[0]] != column[w[1]]).count();

    let mut raw = vec![0usize; n];
    let mut below = 0;
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && column[i] != column[order[pos - 1]] {
            below = pos;
            rank += 1;
        }
        raw[i] = if distinct <= bins { rank } else { bins * below / n };
    }

    let mut labels = vec![0u32; n];
    let mut edges = Vec::new();
    let mut last_raw = usize::MAX;
    for &i in &order {
        if raw[i] != last_raw {
            edges.push(column[i]);
            last_raw = raw[i];
        } else {
            *edges.last_mut().expect("pushed above") = column[i];
        }
        labels[i] = (edges.len() - 1) as u32;
    }
    Ok(DiscretizedColumn { labels, bins: edges.len(), edges })
}

/// Class labels used directly as bins.
pub fn categorical(labels: &[usize]) -> DiscretizedColumn {
    let bins = labels.iter().max().map_or(0, |&m| m + 1);
    DiscretizedColumn {
        labels: labels.iter().map(|&l| l as u32).collect(),
        bins,
        edges: (0..bins).map(|b| b as f64).collect(),
    }
}

/// Discretize a prediction target: class labels pass through, continuous
/// targets get [`DEFAULT_BINS`] equal-frequency bins.
pub fn discretize_target(y: &[f64], task: Task) -> Result<DiscretizedColumn, FeatSelError> {
    match task {
        Task::Classification => Ok(categorical(&y.iter().map(|&v| v as usize).collect::<Vec<_>>())),
        Task::Regression => discretize(y, DEFAULT_BINS),
    }
}

/// Plug-in mutual information in nats. Cell terms are summed in sorted order,
/// which makes the estimate exactly symmetric in its arguments.
pub fn mutual_information(u: &DiscretizedColumn, v: &DiscretizedColumn) -> Result<f64, FeatSelError> {
    let n = u.labels.len();
    if v.labels.len() != n {
        return Err(FeatSelError::LengthMismatch(n, v.labels.len()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let (bu, bv) = (u.bins.max(1), v.bins.max(1));
    let mut joint = vec![0u64; bu * bv];
    let mut cu = vec![0u64; bu];
    let mut cv = vec![0u64; bv];
    for (&a, &b) in u.labels.iter().zip(&v.labels) {
        joint[a as usize * bv + b as usize] += 1;
        cu[a as usize] += 1;
        cv[b as usize] += 1;
    }
    let nf = n as f64;
    let mut terms: Vec<f64> = joint
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(cell, &c)| {
            let c = c as f64;
            let marg = cu[cell / bv] as f64 * cv[cell % bv] as f64;
            c / nf * (c * nf / marg).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

/// One greedy step: the chosen column, its relevance, the mean redundancy
/// with earlier picks and the resulting score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: usize,
    pub name: String,
    pub relevance: f64,
    pub redundancy: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
}

impl SelectionTrace {
    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.feature).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,feature,relevance,redundancy,score\n");
        for (i, st) in self.steps.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{:.12},{:.12},{:.12}\n",
                i + 1,
                csv_field(&st.name),
                st.relevance,
                st.redundancy,
                st.score
            ));
        }
        s
    }
}

/// Greedy mRMR: each step picks the unselected column maximizing relevance
/// minus its average mutual information with the columns already picked. The
/// first pick maximizes relevance alone; ties go to the lower column index.
/// Requests beyond the column count select every column.
pub fn mrmr_select(
    features: &FeatureMatrix,
    target: &DiscretizedColumn,
    m: usize,
    bins: usize,
) -> Result<SelectionTrace, FeatSelError> {
    if m == 0 {
        return Err(FeatSelError::ZeroRequested);
    }
    let k = features.n_cols();
    if k == 0 {
        return Err(FeatSelError::NoFeatures);
    }
    if target.labels.len() != features.n_rows() {
        return Err(FeatSelError::LengthMismatch(features.n_rows(), target.labels.len()));
    }
    if m > k {
        log::warn!("requested {m} features but only {k} exist; selecting all");
    }
    let m = m.min(k);
    let columns: Vec<DiscretizedColumn> =
        (0..k).into_par_iter().map(|j| discretize(&features.column(j), bins)).collect::<Result<_, _>>()?;
    let relevance: Vec<f64> =
        columns.par_iter().map(|c| mutual_information(c, target)).collect::<Result<_, _>>()?;

    let mut redundancy_sum = vec![0.0; k];
    let mut chosen = vec![false; k];
    let mut steps: Vec<SelectionStep> = Vec::with_capacity(m);
    for step in 0..m {
        if let Some(last) = steps.last() {
            let last_col = &columns[last.feature];
            let added: Vec<f64> = (0..k)
                .into_par_iter()
                .map(|j| if chosen[j] { Ok(0.0) } else { mutual_information(&columns[j], last_col) })
                .collect::<Result<_, _>>()?;
            for (s, a) in redundancy_sum.iter_mut().zip(added) {
                *s += a;
            }
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..k).filter(|&j| !chosen[j]) {
            let red = if step == 0 { 0.0 } else { redundancy_sum[j] / step as f64 };
            let score = relevance[j] - red;
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((j, score, red));
            }
        }
        let (j, score, red) = best.expect("m <= k leaves a candidate");
        chosen[j] = true;
        steps.push(SelectionStep {
            feature: j,
            name: features.names()[j].clone(),
            relevance: relevance[j],
            redundancy: red,
            score,
        });
    }
    Ok(SelectionTrace { steps })
}
