//! Seeded experiment harness: synthetic scenes, repeated fits and summary
//! tables.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{aggregate, misclassification, RunRecord, RunStats};
use crate::geometry::{
    generate_pentagon, generate_planes, sample_hypotheses_with, sample_hypotheses_with_gt,
    BoundingBox, ModelHypothesis, ModelKind, PointSet, SamplingOptions, SyntheticConfig,
};
use crate::pipeline::{
    fit_derqumf, fit_qumf_baseline, fit_rqumf, BaselineConfig, DecomposeConfig, FitResult, Method,
    Scene,
};
use crate::preference::{build_preference, ConsensusConfig, PreferenceMatrix};
use crate::qubo::QuboParams;
use crate::rng::derive_seed;
use crate::solvers::{
    Exhaustive, ExternalConfig, ExternalSolver, SaConfig, SimulatedAnnealer, Solver,
};

/// λ values used by the synthetic harness, found with [`crate::tuning::tune`]
/// on seeded pentagon batteries.
pub const HARNESS_PARAMS: QuboParams = QuboParams {
    lambda1: 2.15,
    lambda2: 1.75,
};

/// Model-count weight of the set-cover baseline in the synthetic harness.
pub const HARNESS_BASELINE_LAMBDA: f64 = 0.5;

pub const MODEL_GRID: [usize; 5] = [20, 50, 100, 500, 1000];
pub const OUTLIER_GRID: [f64; 5] = [0.0, 0.1, 0.17, 0.33, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    PentagonSweepOutliers,
    PentagonSweepModels,
    PlaneFit3D,
    IngestedPreference,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "pentagonsweepoutliers" | "outliers" => Ok(Scenario::PentagonSweepOutliers),
            "pentagonsweepmodels" | "models" | "pentagon" => Ok(Scenario::PentagonSweepModels),
            "planefit3d" | "planes" => Ok(Scenario::PlaneFit3D),
            "ingestedpreference" | "ingested" => Ok(Scenario::IngestedPreference),
            _ => Err(Error::InvalidConfig(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SolverChoice {
    #[default]
    Sa,
    Exhaustive,
    External,
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa" => Ok(SolverChoice::Sa),
            "exhaustive" => Ok(SolverChoice::Exhaustive),
            "external" => Ok(SolverChoice::External),
            _ => Err(Error::InvalidConfig(format!("unknown solver {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub solver: SolverChoice,
    pub synthetic: SyntheticConfig,
    /// Inlier threshold; the scenario default when absent.
    pub epsilon: Option<f64>,
    pub params: QuboParams,
    pub sa: SaConfig,
    pub decompose: DecomposeConfig,
    pub baseline: BaselineConfig,
    pub external: ExternalConfig,
    /// Hypothesis count; `models_per_point × points` when absent.
    pub models: Option<usize>,
    pub models_per_point: usize,
    /// Prepend least-squares fits of the true structures to the pool.
    pub gt_injection: bool,
    pub sampling: SamplingOptions,
    pub repeats: usize,
    pub seed: u64,
    /// Settings swept by [`run_bench`]; the scenario grid when absent.
    pub grid: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::PentagonSweepModels,
            methods: vec![Method::RQuMF],
            solver: SolverChoice::Sa,
            synthetic: SyntheticConfig::default(),
            epsilon: None,
            params: HARNESS_PARAMS,
            sa: SaConfig::default(),
            decompose: DecomposeConfig::default(),
            baseline: BaselineConfig {
                lambda: HARNESS_BASELINE_LAMBDA,
                k: None,
            },
            external: ExternalConfig::default(),
            models: None,
            models_per_point: 6,
            gt_injection: true,
            sampling: SamplingOptions::default(),
            repeats: 20,
            seed: 0,
            grid: None,
        }
    }
}

impl ExperimentConfig {
    /// Defaults adjusted for a scenario: the 3D scene gets a cube and a
    /// wider threshold.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = Self {
            scenario,
            ..Self::default()
        };
        if scenario == Scenario::PlaneFit3D {
            cfg.synthetic.bounding_box = BoundingBox::cube(6.0);
            cfg.synthetic.noise_sigma = 0.1;
            cfg.synthetic.total_points = 60;
            cfg.synthetic.n_structures = 6;
        }
        cfg
    }

    pub fn kind(&self) -> ModelKind {
        if self.scenario == Scenario::PlaneFit3D {
            ModelKind::Plane3D
        } else {
            ModelKind::Line2D
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match self.scenario {
            Scenario::PlaneFit3D => 0.5,
            _ => 3.0 * self.synthetic.noise_sigma.max(0.01),
        })
    }

    pub fn model_count(&self) -> usize {
        self.models
            .unwrap_or(self.models_per_point * self.synthetic.total_points)
    }

    pub fn grid(&self) -> Vec<f64> {
        if let Some(g) = &self.grid {
            return g.clone();
        }
        match self.scenario {
            Scenario::PentagonSweepModels => MODEL_GRID.iter().map(|&m| m as f64).collect(),
            Scenario::PentagonSweepOutliers => OUTLIER_GRID.to_vec(),
            _ => vec![self.synthetic.outlier_fraction],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no method selected".into()));
        }
        if self.models_per_point == 0 {
            return Err(Error::InvalidConfig(
                "models per point must be positive".into(),
            ));
        }
        self.synthetic.validate()?;
        self.params.validate()?;
        self.sa.validate()?;
        self.decompose.validate()?;
        self.baseline.validate()?;
        ConsensusConfig::new(self.epsilon())?;
        Ok(())
    }

    pub fn solver(&self, seed: u64) -> Solver {
        match self.solver {
            SolverChoice::Sa => Solver::Sa(SimulatedAnnealer::new(SaConfig {
                seed,
                ..self.sa.clone()
            })),
            SolverChoice::Exhaustive => Solver::Exhaustive(Exhaustive),
            SolverChoice::External => Solver::External(ExternalSolver {
                config: self.external.clone(),
            }),
        }
    }

    /// Copy with the swept quantity set to `value`.
    fn at_setting(&self, value: f64) -> Self {
        let mut cfg = self.clone();
        match self.scenario {
            Scenario::PentagonSweepModels => cfg.models = Some(value as usize),
            Scenario::PentagonSweepOutliers | Scenario::PlaneFit3D => {
                cfg.synthetic.outlier_fraction = value
            }
            Scenario::IngestedPreference => {}
        }
        cfg
    }
}

/// A generated problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub points: PointSet,
    pub truth: Vec<ModelHypothesis>,
    pub models: Vec<ModelHypothesis>,
    pub preference: PreferenceMatrix,
}

impl Instance {
    pub fn scene(&self) -> Scene<'_> {
        Scene {
            points: &self.points,
            models: &self.models,
        }
    }
}

/// Builds the instance of one repeat; `seed` drives both the scene and the
/// hypothesis sampling.
pub fn make_instance(config: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let synthetic = SyntheticConfig {
        seed: derive_seed(seed, 0),
        ..config.synthetic.clone()
    };
    let (points, truth) = match config.scenario {
        Scenario::PlaneFit3D => generate_planes(&synthetic)?,
        Scenario::PentagonSweepModels | Scenario::PentagonSweepOutliers => {
            generate_pentagon(&synthetic)?
        }
        Scenario::IngestedPreference => {
            return Err(Error::InvalidConfig(
                "ingested preference matrices have no generator".into(),
            ))
        }
    };
    let m = config.model_count();
    let sample_seed = derive_seed(seed, 1);
    let models = if config.gt_injection {
        sample_hypotheses_with_gt(&points, config.kind(), m, sample_seed, &config.sampling)?
    } else {
        sample_hypotheses_with(&points, config.kind(), m, sample_seed, &config.sampling)?
    };
    let preference = build_preference(&points, &models, &ConsensusConfig::new(config.epsilon())?)?;
    Ok(Instance {
        points,
        truth,
        models,
        preference,
    })
}

/// Runs `method` on an instance.
pub fn fit_instance(
    config: &ExperimentConfig,
    method: Method,
    instance: &Instance,
    seed: u64,
) -> Result<FitResult> {
    fit_preference(
        config,
        method,
        &instance.preference,
        Some(&instance.scene()),
        seed,
    )
}

/// Runs `method` on a bare preference matrix. Without a scene, overlapping
/// coverage is resolved by consensus size.
pub fn fit_preference(
    config: &ExperimentConfig,
    method: Method,
    p: &PreferenceMatrix,
    scene: Option<&Scene>,
    seed: u64,
) -> Result<FitResult> {
    let solver = config.solver(derive_seed(seed, 2));
    match method {
        Method::RQuMF => fit_rqumf(p, &config.params, &solver, scene),
        Method::DeRQuMF => {
            let decompose = DecomposeConfig {
                partition_seed: derive_seed(seed, 3),
                ..config.decompose
            };
            fit_derqumf(p, &config.params, &decompose, &solver, scene)
        }
        Method::QuMF => {
            let baseline = BaselineConfig {
                k: None,
                ..config.baseline
            };
            fit_qumf_baseline(p, &baseline, &solver, scene)
        }
        Method::QuMFPostK => {
            let baseline = BaselineConfig {
                k: Some(config.baseline.k.unwrap_or(config.synthetic.n_structures)),
                ..config.baseline
            };
            fit_qumf_baseline(p, &baseline, &solver, scene)
        }
    }
}

/// Seed of repeat `r`; shared by every method so they see the same data.
pub fn repeat_seed(config: &ExperimentConfig, r: usize) -> u64 {
    derive_seed(config.seed, r as u64)
}

/// One repeat of one method: generate, fit, score.
pub fn run_once(config: &ExperimentConfig, method: Method, r: usize) -> Result<RunRecord> {
    let seed = repeat_seed(config, r);
    let instance = make_instance(config, seed)?;
    let fit = fit_instance(config, method, &instance, seed)?;
    let gt = instance
        .points
        .gt_labels()
        .expect("synthetic scenes are labelled");
    Ok(RunRecord {
        seed,
        e_mis: misclassification(gt, &fit.labels)?.e_mis,
        selected: fit.count_selected(),
    })
}

/// `repeats` runs of one method at the configured setting, in parallel.
pub fn run_repeats(config: &ExperimentConfig, method: Method) -> Result<RunStats> {
    config.validate()?;
    let runs = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_once(config, method, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub setting: f64,
    pub method: Method,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub rows: Vec<BenchRow>,
}

/// Every (setting, method, repeat) cell of the scenario grid.
pub fn run_bench(config: &ExperimentConfig) -> Result<BenchReport> {
    config.validate()?;
    if config.scenario == Scenario::IngestedPreference {
        return Err(Error::InvalidConfig(
            "benchmarks need a synthetic scenario".into(),
        ));
    }
    let grid = config.grid();
    let cells: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|g| {
            (0..config.methods.len()).flat_map(move |k| (0..config.repeats).map(move |r| (g, k, r)))
        })
        .collect();
    let settings: Vec<ExperimentConfig> = grid.iter().map(|&v| config.at_setting(v)).collect();
    for s in &settings {
        s.validate()?;
    }
    let records = cells
        .par_iter()
        .map(|&(g, k, r)| run_once(&settings[g], config.methods[k], r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (chunk_idx, chunk) in records.chunks(config.repeats).enumerate() {
        let (g, k) = (
            chunk_idx / config.methods.len(),
            chunk_idx % config.methods.len(),
        );
        rows.push(BenchRow {
            setting: grid[g],
            method: config.methods[k],
            stats: aggregate(chunk)?,
        });
    }
    Ok(BenchReport {
        scenario: config.scenario,
        rows,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::External(format!("csv: {e}"))
}

impl BenchReport {
    /// `setting,method,repeat,seed,e_mis,selected`.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["setting", "method", "repeat", "seed", "e_mis", "selected"])
            .map_err(csv_err)?;
        for row in &self.rows {
            for (r, run) in row.stats.runs.iter().enumerate() {
                w.write_record([
                    row.setting.to_string(),
                    row.method.to_string(),
                    r.to_string(),
                    run.seed.to_string(),
                    run.e_mis.to_string(),
                    run.selected.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<runs>", e))?;
        Ok(())
    }

    /// One row per (setting, method). `std` is empty for single runs.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "setting",
            "method",
            "runs",
            "mean",
            "median",
            "std",
            "mean_selected",
        ])
        .map_err(csv_err)?;
        for row in &self.rows {
            let s = &row.stats;
            w.write_record([
                row.setting.to_string(),
                row.method.to_string(),
                s.runs.len().to_string(),
                format!("{:.4}", s.mean),
                format!("{:.4}", s.median),
                s.std.map(|v| format!("{v:.4}")).unwrap_or_default(),
                format!("{:.4}", s.mean_selected),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }

    /// Plain-text table: one line per setting, one mean column per method.
    pub fn table(&self) -> String {
        let mut methods: Vec<Method> = Vec::new();
        let mut settings: Vec<f64> = Vec::new();
        for row in &self.rows {
            if !methods.contains(&row.method) {
                methods.push(row.method);
            }
            if !settings.contains(&row.setting) {
                settings.push(row.setting);
            }
        }
        let mut out = format!("{:>10}", "setting");
        for m in &methods {
            out.push_str(&format!(" {:>10}", m.as_str()));
        }
        out.push('\n');
        for s in settings {
            out.push_str(&format!("{s:>10}"));
            for m in &methods {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.setting == s && r.method == *m)
                    .map(|r| format!("{:.2}", r.stats.mean))
                    .unwrap_or_default();
                out.push_str(&format!(" {cell:>10}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path).map_err(|e| Error::io(&path, e))
        };
        self.write_runs_csv(create("runs.csv")?)?;
        self.write_summary_csv(create("summary.csv")?)?;
        let path = dir.join("summary.txt");
        std::fs::write(&path, self.table()).map_err(|e| Error::io(&path, e))
    }
}

/// Mean misclassification of `params` over a fixed battery of instances,
/// for use as a tuning objective.
pub fn battery_objective(
    config: &ExperimentConfig,
    method: Method,
    params: QuboParams,
) -> Result<f64> {
    let cfg = ExperimentConfig {
        params,
        ..config.clone()
    };
    Ok(run_repeats(&cfg, method)?.mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            repeats: 2,
            models: Some(20),
            sa: SaConfig {
                num_samples: 10,
                sweeps_per_sample: 200,
                ..Default::default()
            },
            ..ExperimentConfig::for_scenario(scenario)
        }
    }

    #[test]
    fn scenario_defaults() {
        assert_eq!(ExperimentConfig::default().epsilon(), 0.03);
        assert_eq!(ExperimentConfig::default().model_count(), 180);
        let planes = ExperimentConfig::for_scenario(Scenario::PlaneFit3D);
        assert_eq!(planes.epsilon(), 0.5);
        assert_eq!(planes.kind(), ModelKind::Plane3D);
        assert_eq!(
            ExperimentConfig::for_scenario(Scenario::PentagonSweepOutliers).grid(),
            OUTLIER_GRID.to_vec()
        );
        assert_eq!("planes".parse::<Scenario>().unwrap(), Scenario::PlaneFit3D);
        assert!("x".parse::<SolverChoice>().is_err());
    }

    #[test]
    fn instances_are_deterministic() {
        let cfg = quick(Scenario::PentagonSweepModels);
        let a = make_instance(&cfg, 5).unwrap();
        let b = make_instance(&cfg, 5).unwrap();
        assert_eq!(a.preference, b.preference);
        assert_eq!(a.points, b.points);
        assert_eq!(a.preference.n_models(), 20);
    }

    #[test]
    fn every_method_runs() {
        let mut cfg = quick(Scenario::PentagonSweepModels);
        for method in [
            Method::RQuMF,
            Method::DeRQuMF,
            Method::QuMF,
            Method::QuMFPostK,
        ] {
            cfg.methods = vec![method];
            let stats = run_repeats(&cfg, method).unwrap();
            assert_eq!(stats.runs.len(), 2);
            assert!((0.0..=100.0).contains(&stats.mean));
        }
    }

    #[test]
    fn plane_scene_runs() {
        let cfg = quick(Scenario::PlaneFit3D);
        let stats = run_repeats(&cfg, Method::RQuMF).unwrap();
        assert!(stats.mean <= 100.0);
    }

    #[test]
    fn bench_summary_agrees_with_runs() {
        let cfg = ExperimentConfig {
            grid: Some(vec![20.0, 30.0]),
            methods: vec![Method::RQuMF, Method::QuMF],
            ..quick(Scenario::PentagonSweepModels)
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            let again = aggregate(&row.stats.runs).unwrap();
            assert_eq!(again.mean, row.stats.mean);
        }
        let mut buf = Vec::new();
        report.write_summary_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
        assert_eq!(report, run_bench(&cfg).unwrap());
        assert!(report.table().contains("RQuMF"));
    }

    #[test]
    fn ingested_scenario_cannot_be_benchmarked() {
        let cfg = quick(Scenario::IngestedPreference);
        assert!(run_bench(&cfg).is_err());
    }
}
