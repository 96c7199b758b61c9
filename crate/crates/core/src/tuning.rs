//! λ1/λ2 search with a tree-structured Parzen estimator, plus plain random
//! search.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::qubo::QuboParams;
use crate::rng::{rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSpace {
    pub lambda1_range: (f64, f64),
    pub lambda2_range: (f64, f64),
    pub log_scale: [bool; 2],
}

impl Default for TuneSpace {
    fn default() -> Self {
        Self {
            lambda1_range: (0.01, 10.0),
            lambda2_range: (0.01, 10.0),
            log_scale: [true, true],
        }
    }
}

impl TuneSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lambda1", self.lambda1_range),
            ("lambda2", self.lambda2_range),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} range ({lo}, {hi}) must satisfy 0 < lo < hi"
                )));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> [(f64, f64); 2] {
        [self.lambda1_range, self.lambda2_range]
    }

    /// Maps a point of the unit square into parameter space.
    fn decode(&self, u: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, (lo, hi)) in self.ranges().into_iter().enumerate() {
            out[k] = if self.log_scale[k] {
                (lo.ln() + u[k] * (hi.ln() - lo.ln())).exp()
            } else {
                lo + u[k] * (hi - lo)
            };
        }
        out
    }

    #[cfg(test)]
    fn encode(&self, x: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, (lo, hi)) in self.ranges().into_iter().enumerate() {
            out[k] = if self.log_scale[k] {
                (x[k].ln() - lo.ln()) / (hi.ln() - lo.ln())
            } else {
                (x[k] - lo) / (hi - lo)
            };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub n_trials: usize,
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            n_startup: 20,
            gamma: 0.25,
            n_candidates: 24,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.n_startup == 0 || self.n_candidates == 0 {
            return Err(Error::InvalidConfig("trial counts must be positive".into()));
        }
        if self.n_startup > self.n_trials {
            return Err(Error::InvalidConfig(
                "startup trials cannot exceed the trial budget".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `+∞` when the evaluation failed.
    pub objective: f64,
    pub seed: u64,
    /// Unix seconds at evaluation time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

impl TrialRecord {
    pub fn params(&self) -> QuboParams {
        QuboParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

impl TuneOutcome {
    /// `lambda1,lambda2,objective,seed[,timestamp]`, one row per trial.
    pub fn write_history_csv<W: Write>(&self, out: W, with_time: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| Error::External(format!("csv: {e}"));
        let mut header = vec!["lambda1", "lambda2", "objective", "seed"];
        if with_time {
            header.push("timestamp");
        }
        w.write_record(&header).map_err(fail)?;
        for t in &self.history {
            let mut row = vec![
                t.lambda1.to_string(),
                t.lambda2.to_string(),
                t.objective.to_string(),
                t.seed.to_string(),
            ];
            if with_time {
                row.push(t.timestamp.map(|s| s.to_string()).unwrap_or_default());
            }
            w.write_record(&row).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }
}

fn unix_now() -> Option<u64> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

struct Search<'a, F> {
    space: &'a TuneSpace,
    eval: F,
    seed: u64,
    units: Vec<[f64; 2]>,
    history: Vec<TrialRecord>,
}

impl<F: FnMut(f64, f64) -> Result<f64>> Search<'_, F> {
    fn evaluate(&mut self, u: [f64; 2]) {
        let [l1, l2] = self.space.decode(u);
        let objective = match (self.eval)(l1, l2) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::INFINITY,
        };
        self.units.push(u);
        self.history.push(TrialRecord {
            lambda1: l1,
            lambda2: l2,
            objective,
            seed: self.seed,
            timestamp: unix_now(),
        });
    }

    fn finish(self) -> TuneOutcome {
        let best = self
            .history
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .cloned()
            .expect("at least one trial");
        debug_assert!(self.history.iter().all(|t| best.objective <= t.objective));
        TuneOutcome {
            best,
            history: self.history,
        }
    }
}

fn uniform_point(rng: &mut Rng) -> [f64; 2] {
    [rng.random::<f64>(), rng.random::<f64>()]
}

/// Best of `n_trials` uniform (log-uniform where flagged) draws.
pub fn random_search<F>(
    space: &TuneSpace,
    n_trials: usize,
    eval: F,
    seed: u64,
) -> Result<TuneOutcome>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig("trial budget must be positive".into()));
    }
    let mut rng = rng_from(seed);
    let mut search = Search {
        space,
        eval,
        seed,
        units: Vec::new(),
        history: Vec::new(),
    };
    for _ in 0..n_trials {
        search.evaluate(uniform_point(&mut rng));
    }
    Ok(search.finish())
}

/// Tree-structured Parzen estimator: after `n_startup` random trials, each
/// proposal is the candidate (drawn from the density of the best
/// `⌈γ·√N⌉` trials) maximizing the ratio of that density to the density of
/// the rest. Failed evaluations count as `+∞`.
pub fn tune<F>(space: &TuneSpace, config: &TuneConfig, eval: F) -> Result<TuneOutcome>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    space.validate()?;
    config.validate()?;
    let mut rng = rng_from(config.seed);
    let mut search = Search {
        space,
        eval,
        seed: config.seed,
        units: Vec::new(),
        history: Vec::new(),
    };
    for _ in 0..config.n_startup {
        search.evaluate(uniform_point(&mut rng));
    }
    while search.history.len() < config.n_trials {
        let u = propose(&search.units, &search.history, config, &mut rng);
        search.evaluate(u);
    }
    Ok(search.finish())
}

fn propose(
    units: &[[f64; 2]],
    history: &[TrialRecord],
    config: &TuneConfig,
    rng: &mut Rng,
) -> [f64; 2] {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[a].objective.total_cmp(&history[b].objective));
    let n_good =
        ((config.gamma * (history.len() as f64).sqrt()).ceil() as usize).clamp(1, history.len());
    let good: Vec<[f64; 2]> = order[..n_good].iter().map(|&i| units[i]).collect();
    let bad: Vec<[f64; 2]> = order[n_good..].iter().map(|&i| units[i]).collect();
    let l = [Parzen::fit(&good, 0), Parzen::fit(&good, 1)];
    let g = [Parzen::fit(&bad, 0), Parzen::fit(&bad, 1)];

    let mut best = ([0.0; 2], f64::NEG_INFINITY);
    for _ in 0..config.n_candidates {
        let x = [l[0].sample(rng), l[1].sample(rng)];
        let score: f64 = (0..2)
            .map(|k| l[k].log_density(x[k]) - g[k].log_density(x[k]))
            .sum();
        if score > best.1 {
            best = (x, score);
        }
    }
    best.0
}

/// Linearly interpolated sample quantile.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// One-dimensional Gaussian mixture on `[0, 1]`, each kernel truncated to
/// the interval, plus one uniform component of the same weight.
struct Parzen {
    /// `(centre, bandwidth, density, mass inside [0, 1])`
    kernels: Vec<(f64, f64, Normal, f64)>,
}

impl Parzen {
    fn fit(points: &[[f64; 2]], dim: usize) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p[dim]).collect();
        if xs.is_empty() {
            return Self {
                kernels: Vec::new(),
            };
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k).sqrt();
        // Silverman's rule of thumb, floored at 1% of the interval
        let iqr = quantile(&xs, 0.75) - quantile(&xs, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let bandwidth = (0.9 * spread * k.powf(-0.2)).max(0.01);
        let kernels = xs
            .into_iter()
            .map(|x| {
                let n = Normal::new(x, bandwidth).expect("positive bandwidth");
                let mass = n.cdf(1.0) - n.cdf(0.0);
                (x, bandwidth, n, mass)
            })
            .collect();
        Self { kernels }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        if self.kernels.is_empty() {
            return rng.random::<f64>();
        }
        let pick = rng.random_range(0..=self.kernels.len());
        if pick == self.kernels.len() {
            return rng.random::<f64>();
        }
        let (mu, h, _, _) = self.kernels[pick];
        let dist = rand_distr::Normal::new(mu, h).expect("positive bandwidth");
        for _ in 0..64 {
            let x = rng.sample(dist);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        mu.clamp(0.0, 1.0)
    }

    fn log_density(&self, x: f64) -> f64 {
        if self.kernels.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .kernels
            .iter()
            .map(|(_, _, n, mass)| n.pdf(x) / mass)
            .sum();
        ((total + 1.0) / (self.kernels.len() + 1) as f64).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convex(l1: f64, l2: f64) -> Result<f64> {
        Ok((l1 - 1.7).powi(2) + (l2 - 0.1).powi(2))
    }

    #[test]
    fn constant_objective() {
        let out = tune(
            &TuneSpace::default(),
            &TuneConfig {
                n_trials: 30,
                ..Default::default()
            },
            |_, _| Ok(4.0),
        )
        .unwrap();
        assert_eq!(out.history.len(), 30);
        assert_eq!(out.best.objective, 4.0);
    }

    #[test]
    fn recovers_convex_optimum() {
        let hits = (0..10)
            .filter(|&seed| {
                let out = tune(
                    &TuneSpace::default(),
                    &TuneConfig {
                        seed,
                        ..Default::default()
                    },
                    convex,
                )
                .unwrap();
                (out.best.lambda1 - 1.7).abs() <= 0.2 && (out.best.lambda2 - 0.1).abs() <= 0.2
            })
            .count();
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn tpe_beats_random_on_average() {
        let (mut tpe, mut rnd) = (0.0, 0.0);
        for seed in 0..10 {
            tpe += tune(
                &TuneSpace::default(),
                &TuneConfig {
                    seed,
                    ..Default::default()
                },
                convex,
            )
            .unwrap()
            .best
            .objective;
            rnd += random_search(&TuneSpace::default(), 100, convex, seed)
                .unwrap()
                .best
                .objective;
        }
        assert!(tpe < rnd);
    }

    #[test]
    fn startup_only_equals_random_search() {
        let cfg = TuneConfig {
            n_trials: 15,
            n_startup: 15,
            seed: 9,
            ..Default::default()
        };
        let a = tune(&TuneSpace::default(), &cfg, convex).unwrap();
        let b = random_search(&TuneSpace::default(), 15, convex, 9).unwrap();
        let strip = |h: &[TrialRecord]| {
            h.iter()
                .map(|t| (t.lambda1, t.lambda2, t.objective))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.history), strip(&b.history));
        assert_eq!(a.best.objective, b.best.objective);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = TuneConfig {
            n_trials: 40,
            seed: 3,
            ..Default::default()
        };
        let a = tune(&TuneSpace::default(), &cfg, convex).unwrap();
        let b = tune(&TuneSpace::default(), &cfg, convex).unwrap();
        let strip =
            |h: &[TrialRecord]| h.iter().map(|t| (t.lambda1, t.lambda2)).collect::<Vec<_>>();
        assert_eq!(strip(&a.history), strip(&b.history));
    }

    #[test]
    fn failures_become_infinite() {
        let mut calls = 0;
        let out = tune(
            &TuneSpace::default(),
            &TuneConfig {
                n_trials: 25,
                ..Default::default()
            },
            |l1, _| {
                calls += 1;
                if calls % 2 == 0 {
                    Err(Error::InvalidConfig("boom".into()))
                } else {
                    Ok(l1)
                }
            },
        )
        .unwrap();
        assert_eq!(
            out.history
                .iter()
                .filter(|t| t.objective.is_infinite())
                .count(),
            12
        );
        assert!(out.best.objective.is_finite());
        assert!(out
            .history
            .iter()
            .all(|t| out.best.objective <= t.objective));
    }

    #[test]
    fn random_search_edges() {
        let one = random_search(&TuneSpace::default(), 1, convex, 1).unwrap();
        assert_eq!(one.history.len(), 1);
        assert_eq!(one.best, one.history[0]);
        // monotone in λ1: the best of many draws sits near the lower bound
        let out = random_search(&TuneSpace::default(), 200, |l1, _| Ok(l1), 2).unwrap();
        assert!(out.best.lambda1 < 0.02);
        assert!(random_search(&TuneSpace::default(), 0, convex, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let bad_space = TuneSpace {
            lambda1_range: (1.0, 0.5),
            ..Default::default()
        };
        assert!(tune(&bad_space, &TuneConfig::default(), convex).is_err());
        let bad = TuneConfig {
            n_startup: 200,
            ..Default::default()
        };
        assert!(tune(&TuneSpace::default(), &bad, convex).is_err());
        let bad = TuneConfig {
            gamma: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let space = TuneSpace {
            log_scale: [true, false],
            ..Default::default()
        };
        for u in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            let back = space.encode(space.decode(u));
            assert!((back[0] - u[0]).abs() < 1e-12 && (back[1] - u[1]).abs() < 1e-12);
        }
        assert!((space.decode([1.0, 1.0])[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn parzen_density_integrates_to_one() {
        let p = Parzen::fit(&[[0.02, 0.0], [0.5, 0.0], [0.97, 0.0]], 0);
        let steps = 20_000;
        let integral: f64 = (0..steps)
            .map(|i| p.log_density((i as f64 + 0.5) / steps as f64).exp() / steps as f64)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        let mut rng = rng_from(0);
        for _ in 0..100 {
            assert!((0.0..=1.0).contains(&p.sample(&mut rng)));
        }
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.25), 5.0);
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.75), 3.0);
    }

    #[test]
    fn history_csv_layout() {
        let out = random_search(&TuneSpace::default(), 2, |_, _| Ok(1.5), 4).unwrap();
        let mut buf = Vec::new();
        out.write_history_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda1,lambda2,objective,seed");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",1.5,4"));
    }
}
