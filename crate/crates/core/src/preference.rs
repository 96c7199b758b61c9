//! Binary preference-consensus matrices.
//!
//! Rows are points, columns are hypotheses. `P[i, j] = 1` iff the residual of
//! point `i` under hypothesis `j` is strictly below the inlier threshold, so a
//! column is the consensus set of its hypothesis and a row is the preference
//! set of its point.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{residual, ModelHypothesis, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub epsilon: f64,
}

impl ConsensusConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "inlier threshold must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceMatrix {
    n: usize,
    m: usize,
    /// Row-major 0/1 entries.
    data: Vec<u8>,
    column_ids: Vec<usize>,
}

impl PreferenceMatrix {
    /// Builds from row-major 0/1 entries; column ids default to `0..m`.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::ShapeMismatch(
                "preference matrix must be non-empty".into(),
            ));
        }
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::parse(i + 1, r.len(), "ragged row"));
            }
            if let Some(j) = r.iter().position(|&v| v > 1) {
                return Err(Error::parse(i + 1, j + 1, "entry is not 0 or 1"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n,
            m,
            data,
            column_ids: (0..m).collect(),
        })
    }

    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        Self::from_rows(&vec![vec![0; m]; n])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|i| (0..n).map(|j| u8::from(i == j)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn with_column_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "{} column ids for {} columns",
                ids.len(),
                self.m
            )));
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("column ids must be distinct".into()));
        }
        self.column_ids = ids;
        Ok(self)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn n_models(&self) -> usize {
        self.m
    }

    pub fn column_ids(&self) -> &[usize] {
        &self.column_ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.m + j] != 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Point indices in the consensus set of column `j`.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i, j)).collect()
    }

    /// Consensus-set sizes, one per column.
    pub fn column_stats(&self) -> Vec<usize> {
        let mut out = vec![0; self.m];
        for i in 0..self.n {
            for (j, &v) in self.row(i).iter().enumerate() {
                out[j] += usize::from(v);
            }
        }
        out
    }

    /// Preference-set sizes, one per row.
    pub fn row_stats(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&v| usize::from(v)).sum())
            .collect()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| usize::from(v)).sum()
    }

    /// Sub-matrix keeping all rows and the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::ShapeMismatch("column selection is empty".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.m) {
            return Err(Error::ShapeMismatch(format!("column {bad} out of range")));
        }
        let mut data = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            let row = self.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self {
            n: self.n,
            m: cols.len(),
            data,
            column_ids: cols.iter().map(|&c| self.column_ids[c]).collect(),
        })
    }

    /// Columns worth solving for: drops empty consensus sets and keeps only the
    /// lowest-indexed column among identical ones. Returns local column indices
    /// in ascending order.
    pub fn distinct_nonempty_columns(&self) -> Vec<usize> {
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut keep = Vec::new();
        for j in 0..self.m {
            let support = self.column_support(j);
            if support.is_empty() {
                continue;
            }
            seen.entry(support).or_insert_with(|| {
                keep.push(j);
                j
            });
        }
        keep
    }

    /// Comma-separated 0/1 rows, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::with_capacity(2 * self.m);
        for i in 0..self.n {
            line.clear();
            for (j, &v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push(if v == 1 { '1' } else { '0' });
            }
            line.push('\n');
            out.write_all(line.as_bytes())
                .map_err(|e| Error::io("<preference>", e))?;
        }
        out.flush().map_err(|e| Error::io("<preference>", e))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<preference>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(j, tok)| match tok.trim() {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::parse(
                        i + 1,
                        j + 1,
                        format!("entry {other:?} is not 0 or 1"),
                    )),
                })
                .collect::<Result<Vec<u8>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::parse(
                        i + 1,
                        row.len(),
                        format!("row has {} entries, expected {first}", row.len()),
                    ));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::parse(1, 1, "empty preference file"));
        }
        Self::from_rows(&rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Builds `P` for `models` over `points`.
pub fn build_preference(
    points: &PointSet,
    models: &[ModelHypothesis],
    config: &ConsensusConfig,
) -> Result<PreferenceMatrix> {
    if models.is_empty() {
        return Err(Error::InvalidConfig("no hypotheses".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidConfig("no points".into()));
    }
    ConsensusConfig::new(config.epsilon)?;
    let (n, m) = (points.len(), models.len());
    let mut data = Vec::with_capacity(n * m);
    for p in points.points() {
        for model in models {
            data.push(u8::from(residual(model, p)? < config.epsilon));
        }
    }
    Ok(PreferenceMatrix {
        n,
        m,
        data,
        column_ids: (0..m).collect(),
    })
}

/// Companion metadata stored next to a preference CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSidecar {
    pub epsilon: Option<f64>,
    pub column_ids: Vec<usize>,
    #[serde(default)]
    pub provenance: String,
}

impl PreferenceSidecar {
    pub fn for_matrix(p: &PreferenceMatrix, epsilon: Option<f64>, provenance: &str) -> Self {
        Self {
            epsilon,
            column_ids: p.column_ids.clone(),
            provenance: provenance.to_string(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}
