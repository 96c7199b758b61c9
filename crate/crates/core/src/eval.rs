//! Misclassification error under the best label correspondence, and run
//! statistics.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the outlier label takes part in the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelMode {
    /// Estimated `0` only ever means ground-truth `0`.
    #[default]
    PinnedOutlier,
    /// `0` is matched like any other label.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage of misclassified points, in `[0, 100]`.
    pub e_mis: f64,
    pub misclassified: usize,
    pub n_points: usize,
    /// `(estimated, ground truth)` pairs of the optimal correspondence;
    /// unmatched estimated labels map to `None`.
    pub mapping: Vec<(usize, Option<usize>)>,
    pub est_labels: Vec<usize>,
    pub gt_labels: Vec<usize>,
    /// `confusion[a][b]`: points with estimated label `est_labels[a]` whose
    /// ground truth contains `gt_labels[b]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Misclassification error with the outlier label pinned.
pub fn misclassification(gt: &[usize], est: &[usize]) -> Result<EvalReport> {
    misclassification_with(gt, est, LabelMode::PinnedOutlier)
}

pub fn misclassification_with(gt: &[usize], est: &[usize], mode: LabelMode) -> Result<EvalReport> {
    let sets: Vec<Vec<usize>> = gt.iter().map(|&g| vec![g]).collect();
    misclassification_multi(&sets, est, mode)
}

/// Ground truth with possibly several labels per point (points on an
/// intersection); a point counts as correct when the label its estimate maps
/// to is one of them.
pub fn misclassification_multi(
    gt: &[Vec<usize>],
    est: &[usize],
    mode: LabelMode,
) -> Result<EvalReport> {
    if gt.len() != est.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth labels, {} estimated",
            gt.len(),
            est.len()
        )));
    }
    if let Some(i) = gt.iter().position(|s| s.is_empty()) {
        return Err(Error::ShapeMismatch(format!(
            "point {i} has no ground-truth label"
        )));
    }
    let n = est.len();
    let skip_zero = mode == LabelMode::PinnedOutlier;
    let est_labels: Vec<usize> = est
        .iter()
        .copied()
        .filter(|&l| !(skip_zero && l == 0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let gt_labels: Vec<usize> = gt
        .iter()
        .flatten()
        .copied()
        .filter(|&l| !(skip_zero && l == 0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut confusion = vec![vec![0usize; gt_labels.len()]; est_labels.len()];
    let mut fixed_correct = 0;
    for (set, &e) in gt.iter().zip(est) {
        if skip_zero && e == 0 {
            fixed_correct += usize::from(set.contains(&0));
            continue;
        }
        let a = est_labels.binary_search(&e).expect("label collected above");
        for g in set {
            if let Ok(b) = gt_labels.binary_search(g) {
                confusion[a][b] += 1;
            }
        }
    }

    let assignment = max_weight_matching(&confusion);
    let mut correct = fixed_correct;
    let mut mapping = Vec::with_capacity(est_labels.len());
    for (a, &e) in est_labels.iter().enumerate() {
        let target = assignment[a].filter(|&b| confusion[a][b] > 0);
        if let Some(b) = target {
            correct += confusion[a][b];
        }
        mapping.push((e, target.map(|b| gt_labels[b])));
    }
    if skip_zero && est.contains(&0) {
        mapping.insert(0, (0, Some(0)));
    }
    let misclassified = n - correct;
    Ok(EvalReport {
        e_mis: if n == 0 {
            0.0
        } else {
            100.0 * misclassified as f64 / n as f64
        },
        misclassified,
        n_points: n,
        mapping,
        est_labels,
        gt_labels,
        confusion,
    })
}

/// Row-to-column assignment maximizing the summed weights of a rectangular
/// matrix; rows left without a column get `None`.
pub fn max_weight_matching(weights: &[Vec<usize>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return vec![None; rows];
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            top - weights[i][j] as i64
        } else {
            top
        }
    };
    let col_of_row = hungarian(size, cost);
    (0..rows)
        .map(|i| Some(col_of_row[i]).filter(|&j| j < cols))
        .collect()
}

/// Minimum-cost perfect assignment on a `size × size` cost matrix, using
/// shortest augmenting paths with potentials. Returns the column of each row.
fn hungarian(size: usize, cost: impl Fn(usize, usize) -> i64) -> Vec<usize> {
    const INF: i64 = i64::MAX / 4;
    // 1-based with a virtual column 0
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut row_of_col = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; size];
    for j in 1..=size {
        out[row_of_col[j] - 1] = j - 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub e_mis: f64,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub runs: Vec<RunRecord>,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    pub mean_selected: f64,
}

pub fn aggregate(runs: &[RunRecord]) -> Result<RunStats> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("no runs to aggregate".into()));
    }
    let k = runs.len() as f64;
    let values: Vec<f64> = runs.iter().map(|r| r.e_mis).collect();
    let mean = values.iter().sum::<f64>() / k;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let std = (runs.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt());
    Ok(RunStats {
        runs: runs.to_vec(),
        mean,
        median,
        std,
        mean_selected: runs.iter().map(|r| r.selected as f64).sum::<f64>() / k,
    })
}

impl RunStats {
    /// One row per run: `seed,e_mis,selected`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| Error::External(format!("csv: {e}"));
        w.write_record(["seed", "e_mis", "selected"])
            .map_err(fail)?;
        for r in &self.runs {
            w.write_record([
                r.seed.to_string(),
                r.e_mis.to_string(),
                r.selected.to_string(),
            ])
            .map_err(fail)?;
        }
        w.flush().map_err(|e| Error::io("<runs>", e))?;
        Ok(())
    }
}
