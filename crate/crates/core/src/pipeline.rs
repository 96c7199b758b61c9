//! End-to-end fitting on a preference matrix: one-shot and decomposed robust
//! fitting, label assignment, and the set-cover baseline.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{residual, ModelHypothesis, PointSet};
use crate::preference::PreferenceMatrix;
use crate::qubo::{
    build_rqumf_qubo, fold_constraints, penalty_residual, LinearConstraint, QuboParams,
};
use crate::rng::{derive_seed, rng_from};
use crate::solvers::{best, QuboSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    RQuMF,
    DeRQuMF,
    QuMF,
    QuMFPostK,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::RQuMF => "RQuMF",
            Method::DeRQuMF => "DeRQuMF",
            Method::QuMF => "QuMF",
            Method::QuMFPostK => "QuMFPostK",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rqumf" => Ok(Method::RQuMF),
            "derqumf" => Ok(Method::DeRQuMF),
            "qumf" => Ok(Method::QuMF),
            "qumfpostk" | "qumfpost" => Ok(Method::QuMFPostK),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rounds: usize,
    pub subproblems: usize,
    /// Columns left after each decomposition round.
    pub survivors_per_round: Vec<usize>,
    /// Columns actually passed to the final solve after dropping empty and
    /// duplicate consensus sets.
    pub solved_columns: usize,
    pub solver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    /// Selected column ids, ascending.
    pub selected: Vec<usize>,
    /// `0` for outliers, otherwise a 1-based index into `selected`.
    pub labels: Vec<usize>,
    pub energy: f64,
    pub penalty: f64,
    /// Coverage indicators. For the baseline this is the coverage implied by
    /// the selection.
    pub y: Vec<u8>,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn count_selected(&self) -> usize {
        self.selected.len()
    }

    /// Pretty JSON; `with_time` controls whether wall-clock fields appear.
    pub fn to_json(&self, with_time: bool) -> Result<String> {
        let mut out = self.clone();
        if !with_time {
            out.diagnostics.wall_time_ms = None;
        }
        Ok(serde_json::to_string_pretty(&out)?)
    }
}

pub fn count_selected(result: &FitResult) -> usize {
    result.count_selected()
}

/// Points and hypotheses behind a preference matrix; `models` is indexed by
/// column id. Enables residual-based tie breaking in [`assign_labels`].
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub points: &'a PointSet,
    pub models: &'a [ModelHypothesis],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    pub subproblem_size: usize,
    pub partition_seed: u64,
    pub shuffle_each_round: bool,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            subproblem_size: 40,
            partition_seed: 0,
            shuffle_each_round: true,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subproblem_size < 2 {
            return Err(Error::InvalidConfig(
                "subproblem size must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub lambda: f64,
    /// Known model count; when set only the `k` largest selected models are
    /// kept.
    pub k: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            k: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(
                "baseline lambda must be non-negative".into(),
            ));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one solve over a subset of columns, in local column indices.
struct SubSolve {
    selected: Vec<usize>,
    y: Vec<u8>,
    energy: f64,
    penalty: f64,
    solved_columns: usize,
}

fn check_nonempty(p: &PreferenceMatrix) -> Result<()> {
    if p.n_points() == 0 || p.n_models() == 0 {
        return Err(Error::ShapeMismatch("preference matrix is empty".into()));
    }
    Ok(())
}

fn check_size(solver: &dyn QuboSolver, d: usize) -> Result<()> {
    match solver.max_vars() {
        Some(limit) if d > limit => Err(Error::TooLarge { vars: d, limit }),
        _ => Ok(()),
    }
}

fn solve_columns(
    p: &PreferenceMatrix,
    cols: &[usize],
    params: &QuboParams,
    solver: &dyn QuboSolver,
    stream: u64,
) -> Result<SubSolve> {
    let n = p.n_points();
    let keep: Vec<usize> = if cols.is_empty() {
        Vec::new()
    } else {
        let sub = p.select_columns(cols)?;
        sub.distinct_nonempty_columns()
            .into_iter()
            .map(|j| cols[j])
            .collect()
    };
    if keep.is_empty() {
        // nothing to select: covering a point can only pay the penalty
        let cover = params.lambda2 < 1.0;
        return Ok(SubSolve {
            selected: Vec::new(),
            y: vec![u8::from(cover); n],
            energy: if cover {
                n as f64 * (params.lambda2 - 1.0)
            } else {
                0.0
            },
            penalty: if cover { n as f64 } else { 0.0 },
            solved_columns: 0,
        });
    }
    let reduced = p.select_columns(&keep)?;
    let problem = build_rqumf_qubo(&reduced, params)?;
    check_size(solver, problem.d())?;
    let set = solver.sample(&problem, stream)?;
    let (w, energy) = best(&set)?;
    let selected = (0..keep.len())
        .filter(|&j| w[n + j] == 1)
        .map(|j| keep[j])
        .collect();
    Ok(SubSolve {
        selected,
        y: w[..n].to_vec(),
        energy,
        penalty: penalty_residual(&problem, w)?,
        solved_columns: keep.len(),
    })
}

fn finish(
    p: &PreferenceMatrix,
    method: Method,
    sol: SubSolve,
    scene: Option<&Scene<'_>>,
    mut diagnostics: Diagnostics,
    started: Instant,
) -> Result<FitResult> {
    let mut selected: Vec<usize> = sol.selected.iter().map(|&j| p.column_ids()[j]).collect();
    selected.sort_unstable();
    let labels = assign_labels(p, &selected, scene)?;
    diagnostics.solved_columns = sol.solved_columns;
    diagnostics.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    Ok(FitResult {
        method,
        selected,
        labels,
        energy: sol.energy,
        penalty: sol.penalty,
        y: sol.y,
        diagnostics,
    })
}

/// One-shot robust fit over all columns of `p`.
pub fn fit_rqumf(
    p: &PreferenceMatrix,
    params: &QuboParams,
    solver: &dyn QuboSolver,
    scene: Option<&Scene<'_>>,
) -> Result<FitResult> {
    check_nonempty(p)?;
    let started = Instant::now();
    let all: Vec<usize> = (0..p.n_models()).collect();
    let sol = solve_columns(p, &all, params, solver, 0)?;
    let diagnostics = Diagnostics {
        subproblems: 1,
        solver: solver.name().to_string(),
        ..Default::default()
    };
    finish(p, Method::RQuMF, sol, scene, diagnostics, started)
}

/// Decomposed robust fit: columns are split into blocks of at most
/// `subproblem_size`, each block keeps only the models its own solve selects,
/// and rounds repeat until one block remains. A round that drops nothing ends
/// the loop early and the final solve takes whatever survived.
pub fn fit_derqumf(
    p: &PreferenceMatrix,
    params: &QuboParams,
    config: &DecomposeConfig,
    solver: &dyn QuboSolver,
    scene: Option<&Scene<'_>>,
) -> Result<FitResult> {
    check_nonempty(p)?;
    config.validate()?;
    let started = Instant::now();
    let s = config.subproblem_size;
    let mut diagnostics = Diagnostics {
        solver: solver.name().to_string(),
        ..Default::default()
    };
    let mut survivors: Vec<usize> = (0..p.n_models()).collect();
    while survivors.len() > s {
        diagnostics.rounds += 1;
        let round = diagnostics.rounds as u64;
        let mut order = survivors.clone();
        if config.shuffle_each_round {
            order.shuffle(&mut rng_from(derive_seed(config.partition_seed, round)));
        }
        let mut next = Vec::new();
        for (b, block) in order.chunks(s).enumerate() {
            let stream = derive_seed(round, b as u64).max(1);
            next.extend(solve_columns(p, block, params, solver, stream)?.selected);
            diagnostics.subproblems += 1;
        }
        next.sort_unstable();
        diagnostics.survivors_per_round.push(next.len());
        if next.is_empty() {
            let sol = solve_columns(p, &[], params, solver, 0)?;
            return finish(p, Method::DeRQuMF, sol, scene, diagnostics, started);
        }
        let stalled = next.len() == survivors.len();
        survivors = next;
        if stalled {
            break;
        }
    }
    let sol = solve_columns(p, &survivors, params, solver, 0)?;
    diagnostics.subproblems += 1;
    finish(p, Method::DeRQuMF, sol, scene, diagnostics, started)
}

/// Labels each point with the selected model covering it. Points covered by
/// several selected models go to the one with the smallest residual when a
/// scene is available, otherwise to the one with the larger consensus set;
/// remaining ties go to the lower index. Uncovered points get `0`.
pub fn assign_labels(
    p: &PreferenceMatrix,
    selected: &[usize],
    scene: Option<&Scene<'_>>,
) -> Result<Vec<usize>> {
    let local: Vec<usize> = selected
        .iter()
        .map(|id| {
            p.column_ids()
                .iter()
                .position(|c| c == id)
                .ok_or_else(|| Error::ShapeMismatch(format!("column {id} not in matrix")))
        })
        .collect::<Result<_>>()?;
    if let Some(sc) = scene {
        if sc.points.len() != p.n_points() {
            return Err(Error::ShapeMismatch(format!(
                "scene has {} points, matrix has {}",
                sc.points.len(),
                p.n_points()
            )));
        }
        if let Some(&bad) = selected.iter().find(|&&id| id >= sc.models.len()) {
            return Err(Error::ShapeMismatch(format!(
                "no hypothesis for column {bad}"
            )));
        }
    }
    let consensus: Vec<usize> = local.iter().map(|&j| p.column_support(j).len()).collect();
    let mut labels = vec![0; p.n_points()];
    for (i, label) in labels.iter_mut().enumerate() {
        let mut pick: Option<(usize, f64)> = None;
        for (k, &j) in local.iter().enumerate() {
            if !p.get(i, j) {
                continue;
            }
            let score = match scene {
                Some(sc) => residual(&sc.models[selected[k]], &sc.points.points()[i])?,
                None => -(consensus[k] as f64),
            };
            if pick.is_none_or(|(_, best)| score < best) {
                pick = Some((k, score));
            }
        }
        *label = pick.map_or(0, |(k, _)| k + 1);
    }
    Ok(labels)
}

/// Set-cover baseline without outlier variables: minimizes
/// `λ·Σz + ‖P z − 1‖²`. With `k` set, keeps the `k` selected models with the
/// largest consensus sets and leaves everything they miss unlabelled.
pub fn fit_qumf_baseline(
    p: &PreferenceMatrix,
    config: &BaselineConfig,
    solver: &dyn QuboSolver,
    scene: Option<&Scene<'_>>,
) -> Result<FitResult> {
    check_nonempty(p)?;
    config.validate()?;
    let started = Instant::now();
    let n = p.n_points();
    let keep = p.distinct_nonempty_columns();
    let mut diagnostics = Diagnostics {
        subproblems: 1,
        solver: solver.name().to_string(),
        ..Default::default()
    };
    let (mut selected, energy, penalty) = if keep.is_empty() {
        (Vec::new(), n as f64, n as f64)
    } else {
        let reduced = p.select_columns(&keep)?;
        let m = keep.len();
        let a = DMatrix::from_fn(n, m, |i, j| if reduced.get(i, j) { 1.0 } else { 0.0 });
        let problem = fold_constraints(
            &DMatrix::zeros(m, m),
            &DVector::from_element(m, config.lambda),
            &[LinearConstraint {
                a,
                b: DVector::from_element(n, 1.0),
                weight: 1.0,
            }],
        )?;
        check_size(solver, m)?;
        let set = solver.sample(&problem, 0)?;
        let (w, energy) = best(&set)?;
        let penalty = problem
            .penalty_form()
            .map(|f| f.terms[0].residual_norm2(w))
            .unwrap_or(0.0);
        let sel: Vec<usize> = (0..m).filter(|&j| w[j] == 1).map(|j| keep[j]).collect();
        (sel, energy, penalty)
    };
    diagnostics.solved_columns = keep.len();

    let mut method = Method::QuMF;
    if let Some(k) = config.k {
        method = Method::QuMFPostK;
        let sizes = p.column_stats();
        // stable sort keeps lower column indices first among equal sizes
        selected.sort_by_key(|&j| std::cmp::Reverse(sizes[j]));
        selected.truncate(k);
    }
    let mut ids: Vec<usize> = selected.iter().map(|&j| p.column_ids()[j]).collect();
    ids.sort_unstable();
    let labels = assign_labels(p, &ids, scene)?;
    let y = labels.iter().map(|&l| u8::from(l != 0)).collect();
    diagnostics.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    Ok(FitResult {
        method,
        selected: ids,
        labels,
        energy,
        penalty,
        y,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_pentagon, ModelKind, Point, SyntheticConfig};
    use crate::preference::build_preference;
    use crate::solvers::{Exhaustive, SaConfig, SimulatedAnnealer};
    use crate::ConsensusConfig;

    fn sa() -> SimulatedAnnealer {
        SimulatedAnnealer::new(SaConfig {
            num_samples: 20,
            sweeps_per_sample: 300,
            ..Default::default()
        })
    }

    #[test]
    fn identity_selects_everything() {
        let p = PreferenceMatrix::identity(3).unwrap();
        let r = fit_rqumf(&p, &QuboParams::new(0.5, 1.0).unwrap(), &Exhaustive, None).unwrap();
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.labels, vec![1, 2, 3]);
        assert!((r.energy - (-3.0 + 1.5)).abs() < 1e-12);
        assert_eq!(r.penalty, 0.0);
    }

    #[test]
    fn single_column_example() {
        let p = PreferenceMatrix::from_rows(&[vec![1], vec![1], vec![1]]).unwrap();
        let r = fit_rqumf(&p, &QuboParams::new(0.5, 1.0).unwrap(), &Exhaustive, None).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.energy, -2.5);
        assert_eq!(r.count_selected(), 1);
    }

    #[test]
    fn empty_column_never_selected() {
        let p = PreferenceMatrix::from_rows(&[vec![1, 0, 1], vec![1, 0, 0]]).unwrap();
        for l1 in [0.01, 0.3, 1.5] {
            let r = fit_rqumf(&p, &QuboParams::new(l1, 2.0).unwrap(), &Exhaustive, None).unwrap();
            assert!(!r.selected.contains(&1));
        }
    }

    #[test]
    fn duplicate_columns_collapse_to_lowest() {
        let p =
            PreferenceMatrix::from_rows(&[vec![0, 1, 1], vec![0, 1, 1], vec![1, 0, 0]]).unwrap();
        let r = fit_rqumf(&p, &QuboParams::new(0.5, 2.0).unwrap(), &Exhaustive, None).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.diagnostics.solved_columns, 2);
        assert_eq!(r.labels, vec![2, 2, 1]);
    }

    #[test]
    fn reported_energy_matches_full_problem() {
        let mut rng = rng_from(11);
        for _ in 0..10 {
            let p = crate::qubo::tests::random_preference(&mut rng, 8, 9);
            let params = QuboParams::new(0.6, 1.4).unwrap();
            let r = fit_rqumf(&p, &params, &Exhaustive, None).unwrap();
            let full = build_rqumf_qubo(&p, &params).unwrap();
            let mut w = r.y.clone();
            w.extend((0..9).map(|j| u8::from(r.selected.contains(&j))));
            assert!((full.energy(&w).unwrap() - r.energy).abs() < 1e-9);
            assert!((penalty_residual(&full, &w).unwrap() - r.penalty).abs() < 1e-9);
            let exact = crate::solvers::solve_exhaustive(&full).unwrap();
            assert!((best(&exact).unwrap().1 - r.energy).abs() < 1e-9);
        }
    }

    #[test]
    fn labels_respect_coverage() {
        let mut rng = rng_from(12);
        for _ in 0..20 {
            let p = crate::qubo::tests::random_preference(&mut rng, 10, 12);
            let r = fit_rqumf(&p, &QuboParams::new(0.5, 2.0).unwrap(), &sa(), None).unwrap();
            for (i, &l) in r.labels.iter().enumerate() {
                if l != 0 {
                    assert!(l <= r.selected.len());
                    assert!(p.get(i, r.selected[l - 1]));
                }
            }
        }
    }

    #[test]
    fn decomposition_without_rounds_equals_one_shot() {
        let mut rng = rng_from(13);
        let p = crate::qubo::tests::random_preference(&mut rng, 12, 30);
        let params = QuboParams::new(0.5, 2.0).unwrap();
        let one = fit_rqumf(&p, &params, &sa(), None).unwrap();
        let de = fit_derqumf(&p, &params, &DecomposeConfig::default(), &sa(), None).unwrap();
        assert_eq!(de.method, Method::DeRQuMF);
        assert_eq!(de.diagnostics.rounds, 0);
        assert_eq!(
            (&de.selected, &de.labels, &de.y),
            (&one.selected, &one.labels, &one.y)
        );
        assert_eq!(de.energy.to_bits(), one.energy.to_bits());
    }

    #[test]
    fn survivors_shrink_every_round() {
        let cfg = SyntheticConfig {
            seed: 3,
            ..Default::default()
        };
        let (points, _) = generate_pentagon(&cfg).unwrap();
        let models =
            crate::geometry::sample_hypotheses(&points, ModelKind::Line2D, 200, 3).unwrap();
        let p = build_preference(&points, &models, &ConsensusConfig::new(0.03).unwrap()).unwrap();
        let params = QuboParams::new(2.5, 1.5).unwrap();
        let dc = DecomposeConfig {
            subproblem_size: 20,
            partition_seed: 5,
            shuffle_each_round: true,
        };
        let r = fit_derqumf(&p, &params, &dc, &sa(), None).unwrap();
        let mut prev = 200;
        for &c in &r.diagnostics.survivors_per_round {
            assert!(c <= prev);
            prev = c;
        }
        assert!(r.diagnostics.rounds >= 1);
        let again = fit_derqumf(&p, &params, &dc, &sa(), None).unwrap();
        assert_eq!(
            r,
            FitResult {
                diagnostics: Diagnostics {
                    wall_time_ms: r.diagnostics.wall_time_ms,
                    ..again.diagnostics.clone()
                },
                ..again
            }
        );
    }

    #[test]
    fn stalled_round_goes_straight_to_final_solve() {
        // disjoint single-point columns: every block keeps all of its models
        let p = PreferenceMatrix::identity(9).unwrap();
        let dc = DecomposeConfig {
            subproblem_size: 3,
            partition_seed: 1,
            shuffle_each_round: true,
        };
        let r = fit_derqumf(&p, &QuboParams::new(0.5, 2.0).unwrap(), &dc, &sa(), None).unwrap();
        assert_eq!(r.diagnostics.rounds, 1);
        assert_eq!(r.diagnostics.survivors_per_round, vec![9]);
        assert_eq!(r.selected.len(), 9);
    }

    #[test]
    fn empty_survivors_give_empty_fit() {
        // every model costs more than the points it covers
        let p = PreferenceMatrix::identity(6).unwrap();
        let dc = DecomposeConfig {
            subproblem_size: 2,
            partition_seed: 1,
            shuffle_each_round: false,
        };
        let r = fit_derqumf(
            &p,
            &QuboParams::new(3.0, 2.0).unwrap(),
            &dc,
            &Exhaustive,
            None,
        )
        .unwrap();
        assert!(r.selected.is_empty());
        assert!(r.labels.iter().all(|&l| l == 0));
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn exhaustive_rejects_large_subproblems() {
        let p = PreferenceMatrix::identity(30).unwrap();
        let err = fit_rqumf(&p, &QuboParams::default(), &Exhaustive, None).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }

    #[test]
    fn label_rules() {
        let p = PreferenceMatrix::from_rows(&[vec![1, 0], vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(assign_labels(&p, &[], None).unwrap(), vec![0, 0, 0]);
        assert_eq!(assign_labels(&p, &[0, 1], None).unwrap(), vec![1, 2, 0]);
        // overlap without residuals: larger consensus wins, then lower index
        let p =
            PreferenceMatrix::from_rows(&[vec![1, 1, 1], vec![0, 1, 1], vec![0, 0, 0]]).unwrap();
        assert_eq!(assign_labels(&p, &[0, 1, 2], None).unwrap(), vec![2, 2, 0]);
        assert!(assign_labels(&p, &[7], None).is_err());
    }

    #[test]
    fn intersection_point_goes_to_closer_line() {
        let points = PointSet::new(
            vec![
                Point::new2(0.0, 0.01),
                Point::new2(1.0, 0.0),
                Point::new2(0.0, 1.0),
            ],
            None,
        )
        .unwrap();
        let models = vec![
            ModelHypothesis::new(ModelKind::Line2D, &[1.0, 0.0, 0.0]).unwrap(),
            ModelHypothesis::new(ModelKind::Line2D, &[0.0, 1.0, 0.0]).unwrap(),
        ];
        let p = build_preference(&points, &models, &ConsensusConfig::new(0.05).unwrap()).unwrap();
        let scene = Scene {
            points: &points,
            models: &models,
        };
        // the first point sits near both lines but closer to x = 0
        assert_eq!(
            assign_labels(&p, &[0, 1], Some(&scene)).unwrap(),
            vec![1, 2, 1]
        );
    }

    #[test]
    fn labels_ignore_unselected_columns() {
        let mut rng = rng_from(14);
        for _ in 0..20 {
            let p = crate::qubo::tests::random_preference(&mut rng, 8, 6);
            let sel = vec![1, 4];
            let before = assign_labels(&p, &sel, None).unwrap();
            let perm = p.select_columns(&[3, 1, 5, 0, 4, 2]).unwrap();
            assert_eq!(assign_labels(&perm, &sel, None).unwrap(), before);
        }
    }

    #[test]
    fn baseline_exact_cover() {
        // two disjoint models cover all four points exactly
        let p = PreferenceMatrix::from_rows(&[
            vec![1, 0, 1],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 1, 1],
        ])
        .unwrap();
        let r = fit_qumf_baseline(
            &p,
            &BaselineConfig {
                lambda: 0.5,
                k: None,
            },
            &Exhaustive,
            None,
        )
        .unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.energy, 1.0);
        assert_eq!(r.penalty, 0.0);
        assert_eq!(r.method, Method::QuMF);
        assert_eq!(r.y, vec![1; 4]);
    }

    #[test]
    fn post_processing_keeps_largest() {
        let p = PreferenceMatrix::from_rows(&[
            vec![1, 0, 0],
            vec![1, 0, 0],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
        ])
        .unwrap();
        let plain = fit_qumf_baseline(
            &p,
            &BaselineConfig {
                lambda: 0.5,
                k: None,
            },
            &Exhaustive,
            None,
        )
        .unwrap();
        assert_eq!(plain.selected, vec![0, 1, 2]);
        let post = fit_qumf_baseline(
            &p,
            &BaselineConfig {
                lambda: 0.5,
                k: Some(2),
            },
            &Exhaustive,
            None,
        )
        .unwrap();
        assert_eq!(post.method, Method::QuMFPostK);
        assert_eq!(post.selected, vec![0, 1]);
        assert_eq!(post.labels, vec![1, 1, 1, 2, 2, 0]);
        let noop = fit_qumf_baseline(
            &p,
            &BaselineConfig {
                lambda: 0.5,
                k: Some(3),
            },
            &Exhaustive,
            None,
        )
        .unwrap();
        assert_eq!(noop.labels, plain.labels);
    }

    #[test]
    fn pareto_efficiency_on_small_instances() {
        let mut rng = rng_from(15);
        for _ in 0..20 {
            let (n, m) = (6, 5);
            let p = crate::qubo::tests::random_preference(&mut rng, n, m);
            let l1 = 0.3;
            let params = QuboParams::new(l1, 1.0 + l1 * m as f64 + 0.1).unwrap();
            let r = fit_rqumf(&p, &params, &Exhaustive, None).unwrap();
            assert_eq!(r.penalty, 0.0);
            let covered = r.y.iter().filter(|&&v| v == 1).count();
            // no selection with penalty 0 covers more with no more models
            for mask in 0u32..(1 << m) {
                let sel: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
                let cov = (0..n).filter(|&i| sel.iter().any(|&j| p.get(i, j))).count();
                let disjoint = (0..n).all(|i| sel.iter().filter(|&&j| p.get(i, j)).count() <= 1);
                if disjoint && sel.len() <= r.selected.len() {
                    assert!(cov <= covered);
                }
            }
        }
    }

    #[test]
    fn fit_result_json_omits_time_on_request() {
        let p = PreferenceMatrix::identity(2).unwrap();
        let r = fit_rqumf(&p, &QuboParams::new(0.5, 2.0).unwrap(), &Exhaustive, None).unwrap();
        let text = r.to_json(false).unwrap();
        assert!(!text.contains("wall_time_ms"));
        assert!(text.contains("\"method\": \"RQuMF\""));
        let back: FitResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.selected, r.selected);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("de-rqumf".parse::<Method>().unwrap(), Method::DeRQuMF);
        assert_eq!("QuMF_PostK".parse::<Method>().unwrap(), Method::QuMFPostK);
        assert!("ransac".parse::<Method>().is_err());
    }
}
