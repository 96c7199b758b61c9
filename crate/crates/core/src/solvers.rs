//! QUBO samplers.
//!
//! [`solve_sa`] is single-flip Metropolis simulated annealing with
//! independent restarts, [`solve_exhaustive`] enumerates every assignment and
//! serves as the ground-truth oracle, and [`ExternalSolver`] hands the problem
//! to another program through the QUBO JSON interchange format.

use std::io::Write as _;
use std::process::Command;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{PenaltyForm, QuboProblem};
use crate::rng::{derive_seed, rng_from};

/// Largest problem [`solve_exhaustive`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 25;

/// Ties kept by [`solve_exhaustive`]; further equal-energy states are dropped
/// and the set is flagged as truncated.
pub const MAX_TIES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScheduleKind {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    pub num_samples: usize,
    pub sweeps_per_sample: usize,
    /// `(beta_start, beta_end)`; derived from the problem when absent.
    pub beta_schedule: Option<(f64, f64)>,
    pub schedule_kind: ScheduleKind,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            num_samples: 100,
            sweeps_per_sample: 1000,
            beta_schedule: None,
            schedule_kind: ScheduleKind::Geometric,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.sweeps_per_sample == 0 {
            return Err(Error::InvalidConfig(
                "sample and sweep counts must be positive".into(),
            ));
        }
        if let Some((b0, b1)) = self.beta_schedule {
            if !(b0 > 0.0 && b1 > 0.0 && b0 <= b1 && b1.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "beta schedule ({b0}, {b1}) must be positive and non-decreasing"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub w: Vec<u8>,
    pub energy: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Ascending by energy, then lexicographically by `w`.
    pub samples: Vec<Sample>,
    pub solver_name: String,
    pub wall_time_ms: f64,
    pub truncated: bool,
}

impl SampleSet {
    fn from_states(states: Vec<(Vec<u8>, f64)>, solver_name: &str, started: Instant) -> Self {
        let mut states = states;
        states.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let mut samples: Vec<Sample> = Vec::new();
        for (w, energy) in states {
            match samples.last_mut() {
                Some(last) if last.w == w => last.multiplicity += 1,
                _ => samples.push(Sample {
                    w,
                    energy,
                    multiplicity: 1,
                }),
            }
        }
        Self {
            samples,
            solver_name: solver_name.to_string(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            truncated: false,
        }
    }

    pub fn total_reads(&self) -> usize {
        self.samples.iter().map(|s| s.multiplicity).sum()
    }

    pub fn to_json_model(&self, with_time: bool) -> SampleSetJson {
        SampleSetJson {
            samples: self
                .samples
                .iter()
                .map(|s| SampleJson {
                    w: s.w
                        .iter()
                        .map(|&b| if b == 1 { '1' } else { '0' })
                        .collect(),
                    energy: s.energy,
                    multiplicity: s.multiplicity,
                })
                .collect(),
            solver_name: self.solver_name.clone(),
            wall_time_ms: with_time.then_some(self.wall_time_ms),
        }
    }

    /// Rebuilds a set from its JSON form, re-evaluating every energy against
    /// `problem` and restoring the canonical order.
    pub fn from_json_model(model: &SampleSetJson, problem: &QuboProblem) -> Result<Self> {
        let started = Instant::now();
        let mut states = Vec::new();
        for (k, s) in model.samples.iter().enumerate() {
            let w =
                s.w.chars()
                    .enumerate()
                    .map(|(j, c)| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        _ => Err(Error::parse(k + 1, j + 1, "sample bits must be 0 or 1")),
                    })
                    .collect::<Result<Vec<u8>>>()?;
            let energy = problem.energy(&w)?;
            for _ in 0..s.multiplicity.max(1) {
                states.push((w.clone(), energy));
            }
        }
        let mut set = Self::from_states(states, &model.solver_name, started);
        set.wall_time_ms = model.wall_time_ms.unwrap_or(set.wall_time_ms);
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleJson {
    pub w: String,
    pub energy: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSetJson {
    pub samples: Vec<SampleJson>,
    pub solver_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Lowest-energy sample.
pub fn best(set: &SampleSet) -> Result<(&[u8], f64)> {
    set.samples
        .first()
        .map(|s| (s.w.as_slice(), s.energy))
        .ok_or(Error::EmptySampleSet)
}

/// Anything that turns a QUBO into a sample set. `stream` selects an
/// independent random stream so repeated calls on sub-problems do not reuse
/// the same draws; stream `0` is the solver's configured seed itself.
pub trait QuboSolver: Sync {
    fn name(&self) -> &str;
    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SampleSet>;
    /// Largest problem the solver accepts, if bounded.
    fn max_vars(&self) -> Option<usize> {
        None
    }
}

/// Inverse-temperature range derived from coefficient magnitudes: the hot end
/// accepts the largest possible single-flip uphill move with probability ½,
/// the cold end accepts the smallest nonzero one with probability 1/100.
pub fn default_beta_range(problem: &QuboProblem) -> (f64, f64) {
    let q = problem.q();
    let s = problem.s();
    let d = problem.d();
    let mut max_delta: f64 = 0.0;
    let mut min_delta = f64::INFINITY;
    for k in 0..d {
        let own = (s[k] + q[(k, k)]).abs();
        let mut total = own;
        let mut smallest = if own > 0.0 { own } else { f64::INFINITY };
        for (j, v) in q.column(k).iter().enumerate() {
            if j != k && *v != 0.0 {
                let c = 2.0 * v.abs();
                total += c;
                smallest = smallest.min(c);
            }
        }
        max_delta = max_delta.max(total);
        min_delta = min_delta.min(smallest);
    }
    if max_delta == 0.0 || !min_delta.is_finite() {
        return (0.1, 1.0);
    }
    (2f64.ln() / max_delta, 100f64.ln() / min_delta)
}

fn beta_at(kind: ScheduleKind, (b0, b1): (f64, f64), t: usize, total: usize) -> f64 {
    if total <= 1 {
        return b1;
    }
    let f = t as f64 / (total - 1) as f64;
    match kind {
        ScheduleKind::Geometric => b0 * (b1 / b0).powf(f),
        ScheduleKind::Linear => b0 + (b1 - b0) * f,
    }
}

/// Incremental single-flip energy bookkeeping.
trait FlipState {
    fn delta(&self, k: usize) -> f64;
    fn flip(&mut self, k: usize);
    fn bits(&self) -> &[u8];
}

/// Local fields `h_k = s_k + q_kk + 2 Σ_j q_kj w_j` over the sparse
/// off-diagonal pattern of `Q`.
struct LocalFields<'a> {
    adj: &'a [Vec<(usize, f64)>],
    h: Vec<f64>,
    w: Vec<u8>,
}

impl<'a> LocalFields<'a> {
    fn new(adj: &'a [Vec<(usize, f64)>], base: &[f64], w: Vec<u8>) -> Self {
        let mut h = base.to_vec();
        for (k, row) in adj.iter().enumerate() {
            for &(j, v) in row {
                if w[j] == 1 {
                    h[k] += 2.0 * v;
                }
            }
        }
        Self { adj, h, w }
    }
}

impl FlipState for LocalFields<'_> {
    #[inline]
    fn delta(&self, k: usize) -> f64 {
        if self.w[k] == 0 {
            self.h[k]
        } else {
            -self.h[k]
        }
    }

    #[inline]
    fn flip(&mut self, k: usize) {
        let sign = if self.w[k] == 0 { 2.0 } else { -2.0 };
        for &(j, v) in &self.adj[k] {
            self.h[j] += sign * v;
        }
        self.w[k] ^= 1;
    }

    fn bits(&self) -> &[u8] {
        &self.w
    }
}

/// Residual bookkeeping for problems built as `s0ᵀw + Σ weight ‖A w − b‖²`;
/// each flip costs the nonzeros of one column of `A`.
struct Factored<'a> {
    form: &'a PenaltyForm,
    col_norm2: Vec<Vec<f64>>,
    residual: Vec<Vec<f64>>,
    coupling_field: Option<Vec<f64>>,
    w: Vec<u8>,
}

impl<'a> Factored<'a> {
    fn new(form: &'a PenaltyForm, col_norm2: Vec<Vec<f64>>, w: Vec<u8>) -> Self {
        let residual = form
            .terms
            .iter()
            .map(|t| {
                let mut r: Vec<f64> = t.b.iter().map(|v| -v).collect();
                for (j, col) in t.columns.iter().enumerate() {
                    if w[j] == 1 {
                        for &(i, v) in col {
                            r[i] += v;
                        }
                    }
                }
                r
            })
            .collect();
        let coupling_field = form.has_coupling().then(|| {
            form.coupling
                .iter()
                .map(|row| {
                    row.iter()
                        .filter(|(j, _)| w[*j] == 1)
                        .map(|(_, v)| 2.0 * v)
                        .sum()
                })
                .collect()
        });
        Self {
            form,
            col_norm2,
            residual,
            coupling_field,
            w,
        }
    }

    fn column_norms(form: &PenaltyForm) -> Vec<Vec<f64>> {
        form.terms
            .iter()
            .map(|t| {
                t.columns
                    .iter()
                    .map(|c| c.iter().map(|(_, v)| v * v).sum())
                    .collect()
            })
            .collect()
    }
}

impl FlipState for Factored<'_> {
    #[inline]
    fn delta(&self, k: usize) -> f64 {
        let sigma = if self.w[k] == 0 { 1.0 } else { -1.0 };
        let mut field = self.form.linear[k];
        if let Some(c) = &self.coupling_field {
            field += c[k];
        }
        let mut de = sigma * field;
        for (t, term) in self.form.terms.iter().enumerate() {
            let r = &self.residual[t];
            let dot: f64 = term.columns[k].iter().map(|&(i, v)| v * r[i]).sum();
            de += term.weight * (2.0 * sigma * dot + self.col_norm2[t][k]);
        }
        de
    }

    #[inline]
    fn flip(&mut self, k: usize) {
        let sigma = if self.w[k] == 0 { 1.0 } else { -1.0 };
        for (t, term) in self.form.terms.iter().enumerate() {
            let r = &mut self.residual[t];
            for &(i, v) in &term.columns[k] {
                r[i] += sigma * v;
            }
        }
        if let Some(c) = &mut self.coupling_field {
            for &(j, v) in &self.form.coupling[k] {
                c[j] += 2.0 * sigma * v;
            }
        }
        self.w[k] ^= 1;
    }

    fn bits(&self) -> &[u8] {
        &self.w
    }
}

fn run_sweeps<S: FlipState>(state: &mut S, betas: &[f64], rng: &mut crate::rng::Rng) {
    let d = state.bits().len();
    for &beta in betas {
        for k in 0..d {
            let de = state.delta(k);
            if de <= 0.0 || rng.random::<f64>() < (-beta * de).exp() {
                state.flip(k);
            }
        }
    }
}

enum Evaluator<'a> {
    Fields {
        adj: Vec<Vec<(usize, f64)>>,
        base: Vec<f64>,
    },
    Factored {
        form: &'a PenaltyForm,
        norms: Vec<Vec<f64>>,
    },
}

impl<'a> Evaluator<'a> {
    fn for_problem(problem: &'a QuboProblem) -> Self {
        match problem.penalty_form() {
            Some(form) => Evaluator::Factored {
                form,
                norms: Factored::column_norms(form),
            },
            None => {
                let d = problem.d();
                let q = problem.q();
                let adj = (0..d)
                    .map(|k| {
                        q.column(k)
                            .iter()
                            .enumerate()
                            .filter(|&(j, v)| j != k && *v != 0.0)
                            .map(|(j, v)| (j, *v))
                            .collect()
                    })
                    .collect();
                let base = (0..d).map(|k| problem.s()[k] + q[(k, k)]).collect();
                Evaluator::Fields { adj, base }
            }
        }
    }

    fn anneal(&self, w: Vec<u8>, betas: &[f64], rng: &mut crate::rng::Rng) -> Vec<u8> {
        match self {
            Evaluator::Fields { adj, base } => {
                let mut st = LocalFields::new(adj, base, w);
                run_sweeps(&mut st, betas, rng);
                st.w
            }
            Evaluator::Factored { form, norms } => {
                let mut st = Factored::new(form, norms.clone(), w);
                run_sweeps(&mut st, betas, rng);
                st.w
            }
        }
    }
}

#[cfg(test)]
/// One annealing chain; returns `(initial, final)` states.
pub(crate) fn anneal_chain(
    problem: &QuboProblem,
    evaluator_fields_only: bool,
    betas: &[f64],
    seed: u64,
) -> (Vec<u8>, Vec<u8>) {
    let ev = if evaluator_fields_only {
        let d = problem.d();
        let q = problem.q();
        Evaluator::Fields {
            adj: (0..d)
                .map(|k| {
                    (0..d)
                        .filter(|&j| j != k && q[(j, k)] != 0.0)
                        .map(|j| (j, q[(j, k)]))
                        .collect()
                })
                .collect(),
            base: (0..d).map(|k| problem.s()[k] + q[(k, k)]).collect(),
        }
    } else {
        Evaluator::for_problem(problem)
    };
    let mut rng = rng_from(seed);
    let init: Vec<u8> = (0..problem.d())
        .map(|_| u8::from(rng.random_bool(0.5)))
        .collect();
    let out = ev.anneal(init.clone(), betas, &mut rng);
    (init, out)
}

/// Simulated annealing with `num_samples` independent restarts.
pub fn solve_sa(problem: &QuboProblem, config: &SaConfig) -> Result<SampleSet> {
    config.validate()?;
    let started = Instant::now();
    let d = problem.d();
    if d == 0 {
        let states = vec![(Vec::new(), problem.offset()); config.num_samples];
        return Ok(SampleSet::from_states(states, "sa", started));
    }
    let range = config
        .beta_schedule
        .unwrap_or_else(|| default_beta_range(problem));
    let betas: Vec<f64> = (0..config.sweeps_per_sample)
        .map(|t| beta_at(config.schedule_kind, range, t, config.sweeps_per_sample))
        .collect();
    let ev = Evaluator::for_problem(problem);
    let states: Vec<(Vec<u8>, f64)> = (0..config.num_samples)
        .into_par_iter()
        .map(|chain| {
            let mut rng = rng_from(derive_seed(config.seed, chain as u64));
            let init: Vec<u8> = (0..d).map(|_| u8::from(rng.random_bool(0.5))).collect();
            let w = ev.anneal(init, &betas, &mut rng);
            let e = problem.energy_unchecked(&w);
            (w, e)
        })
        .collect();
    Ok(SampleSet::from_states(states, "sa", started))
}

/// Exact minimizer over all `2^d` assignments, visited in Gray-code order.
pub fn solve_exhaustive(problem: &QuboProblem) -> Result<SampleSet> {
    let d = problem.d();
    if d > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            vars: d,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let started = Instant::now();
    let q = problem.q();
    let s = problem.s();
    let mut h: Vec<f64> = (0..d).map(|k| s[k] + q[(k, k)]).collect();
    let scale: f64 = 1.0
        + problem.offset().abs()
        + s.iter().map(|v| v.abs()).sum::<f64>()
        + q.iter().map(|v| v.abs()).sum::<f64>();
    let window = 1e-9 * scale;

    let mut mask: u32 = 0;
    let mut e = problem.offset();
    let mut best = e;
    let mut candidates: Vec<u32> = vec![0];
    let mut truncated = false;
    for g in 1u64..(1u64 << d) {
        let k = g.trailing_zeros() as usize;
        let sigma = if mask >> k & 1 == 0 { 1.0 } else { -1.0 };
        e += sigma * h[k];
        for (j, v) in q.column(k).iter().enumerate() {
            if j != k {
                h[j] += 2.0 * sigma * v;
            }
        }
        mask ^= 1 << k;
        if e < best - window {
            best = e;
            candidates.clear();
            candidates.push(mask);
            truncated = false;
        } else if e <= best + window {
            if e < best {
                best = e;
            }
            if candidates.len() < 4 * MAX_TIES {
                candidates.push(mask);
            } else {
                truncated = true;
            }
        }
    }
    let mut states: Vec<(Vec<u8>, f64)> = candidates
        .into_iter()
        .map(|m| {
            let w: Vec<u8> = (0..d).map(|i| (m >> i & 1) as u8).collect();
            let e = problem.energy_unchecked(&w);
            (w, e)
        })
        .collect();
    let exact_min = states.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    states.retain(|s| s.1 <= exact_min + 1e-9 * (1.0 + exact_min.abs()));
    let mut set = SampleSet::from_states(states, "exhaustive", started);
    if set.samples.len() > MAX_TIES {
        set.samples.truncate(MAX_TIES);
        truncated = true;
    }
    set.truncated = truncated;
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Exhaustive;

impl QuboSolver for Exhaustive {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn sample(&self, problem: &QuboProblem, _stream: u64) -> Result<SampleSet> {
        solve_exhaustive(problem)
    }

    fn max_vars(&self) -> Option<usize> {
        Some(EXHAUSTIVE_LIMIT)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulatedAnnealer {
    pub config: SaConfig,
}

impl SimulatedAnnealer {
    pub fn new(config: SaConfig) -> Self {
        Self { config }
    }
}

impl QuboSolver for SimulatedAnnealer {
    fn name(&self) -> &str {
        "sa"
    }

    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SampleSet> {
        let mut config = self.config.clone();
        if stream != 0 {
            config.seed = derive_seed(config.seed, stream);
        }
        solve_sa(problem, &config)
    }
}

/// Settings forwarded untouched to an external backend (for instance anneal
/// counts of a hardware sampler).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    /// Program to run. It receives the QUBO JSON path and the backend config
    /// JSON path as its two final arguments and must print sample-set JSON.
    pub command: String,
    pub args: Vec<String>,
    pub num_reads: Option<usize>,
    pub passthrough: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalSolver {
    pub config: ExternalConfig,
}

impl QuboSolver for ExternalSolver {
    fn name(&self) -> &str {
        "external"
    }

    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SampleSet> {
        if self.config.command.is_empty() {
            return Err(Error::External("no command configured".into()));
        }
        let dir = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
        let qubo_path = dir.path().join("qubo.json");
        problem.save_json(&qubo_path)?;
        let cfg_path = dir.path().join("config.json");
        let mut cfg = serde_json::to_value(&self.config)?;
        cfg["stream"] = stream.into();
        let mut f = std::fs::File::create(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        f.write_all(cfg.to_string().as_bytes())
            .map_err(|e| Error::io(&cfg_path, e))?;

        let out = Command::new(&self.config.command)
            .args(&self.config.args)
            .arg(&qubo_path)
            .arg(&cfg_path)
            .output()
            .map_err(|e| Error::External(format!("{}: {e}", self.config.command)))?;
        if !out.status.success() {
            return Err(Error::External(format!(
                "{} exited with {}: {}",
                self.config.command,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let model: SampleSetJson = serde_json::from_slice(&out.stdout)?;
        SampleSet::from_json_model(&model, problem)
    }
}

/// Closed set of solvers the pipeline and CLI can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    Sa(SimulatedAnnealer),
    Exhaustive(Exhaustive),
    External(ExternalSolver),
}

impl QuboSolver for Solver {
    fn name(&self) -> &str {
        match self {
            Solver::Sa(s) => s.name(),
            Solver::Exhaustive(s) => s.name(),
            Solver::External(s) => s.name(),
        }
    }

    fn sample(&self, problem: &QuboProblem, stream: u64) -> Result<SampleSet> {
        match self {
            Solver::Sa(s) => s.sample(problem, stream),
            Solver::Exhaustive(s) => s.sample(problem, stream),
            Solver::External(s) => s.sample(problem, stream),
        }
    }

    fn max_vars(&self) -> Option<usize> {
        match self {
            Solver::Sa(s) => s.max_vars(),
            Solver::Exhaustive(s) => s.max_vars(),
            Solver::External(s) => s.max_vars(),
        }
    }
}
