use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rqumf::experiment::{ExperimentConfig, Scenario, SolverChoice};
use rqumf::tuning::{TuneConfig, TuneSpace};
use rqumf::{LabelMode, Method, QuboParams};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "rqumf",
    version,
    about = "Robust multi-model fitting as a set-coverage QUBO"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic point set (CSV) and its true models (JSON).
    Generate(Common),
    /// Fit one point set or preference matrix and write the result as JSON.
    Fit(Common),
    /// Run repeats over the scenario grid and write CSV summaries.
    Bench(Common),
    /// Search λ1/λ2 on a seeded battery.
    Tune(TuneArgs),
    /// Score a labelling against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// One method, or a comma-separated list for `bench`.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long)]
    pub solver: Option<SolverChoice>,
    /// Point CSV to fit instead of a generated scene.
    #[arg(long, conflicts_with = "preference")]
    pub points: Option<PathBuf>,
    /// Preference matrix CSV to fit directly.
    #[arg(long)]
    pub preference: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub models_per_point: Option<usize>,
    /// Hypothesis count; overrides `--models-per-point`.
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub subproblem_size: Option<usize>,
    #[arg(long)]
    pub sa_samples: Option<usize>,
    #[arg(long)]
    pub sa_sweeps: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub total_points: Option<usize>,
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Model-count weight of the set-cover baseline.
    #[arg(long)]
    pub baseline_lambda: Option<f64>,
    /// Models kept by top-k post-processing.
    #[arg(long)]
    pub k: Option<usize>,
    /// Settings swept by `bench`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Draw minimal samples near each other with this spatial scale.
    #[arg(long)]
    pub locality_sigma: Option<f64>,
    #[arg(long)]
    pub no_gt_injection: bool,
    /// Output file (directory for `bench`). Stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave wall-clock fields out of every output.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub startup: Option<usize>,
    /// `lo,hi`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub lambda1_range: Vec<f64>,
    /// `lo,hi`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub lambda2_range: Vec<f64>,
    /// Search λ on a linear rather than logarithmic scale.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Labelled point CSV, FitResult JSON or a JSON label array.
    #[arg(long)]
    pub gt: PathBuf,
    /// FitResult JSON, JSON label array or labelled point CSV.
    #[arg(long)]
    pub result: PathBuf,
    /// Match the outlier label like any other.
    #[arg(long)]
    pub free_outliers: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalArgs {
    pub fn mode(&self) -> LabelMode {
        if self.free_outliers {
            LabelMode::Free
        } else {
            LabelMode::PinnedOutlier
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Overlays `top` onto `base`, recursing into objects.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

impl Common {
    fn file(&self) -> Result<Value, CliError> {
        match &self.config {
            Some(path) => read_json(path),
            None => Ok(Value::Object(Default::default())),
        }
    }

    /// Defaults of the scenario, then the config file, then flags.
    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut file = self.file()?;
        if let Value::Object(map) = &mut file {
            map.remove("tune");
            map.remove("space");
        }
        let scenario = match (self.scenario, file.get("scenario")) {
            (Some(s), _) => s,
            (None, Some(v)) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Usage(format!("scenario: {e}")))?,
            (None, None) if self.preference.is_some() => Scenario::IngestedPreference,
            (None, None) => Scenario::PentagonSweepModels,
        };
        let mut value = serde_json::to_value(ExperimentConfig::for_scenario(scenario))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        merge(&mut value, file);
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))?;

        cfg.scenario = scenario;
        if !self.method.is_empty() {
            cfg.methods = self.method.clone();
        }
        if let Some(v) = self.solver {
            cfg.solver = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = Some(v);
        }
        if self.lambda1.is_some() || self.lambda2.is_some() {
            cfg.params = QuboParams {
                lambda1: self.lambda1.unwrap_or(cfg.params.lambda1),
                lambda2: self.lambda2.unwrap_or(cfg.params.lambda2),
            };
        }
        if let Some(v) = self.models_per_point {
            cfg.models_per_point = v;
        }
        if let Some(v) = self.models {
            cfg.models = Some(v);
        }
        if let Some(v) = self.subproblem_size {
            cfg.decompose.subproblem_size = v;
        }
        if let Some(v) = self.sa_samples {
            cfg.sa.num_samples = v;
        }
        if let Some(v) = self.sa_sweeps {
            cfg.sa.sweeps_per_sample = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.total_points {
            cfg.synthetic.total_points = v;
        }
        if let Some(v) = self.outlier_fraction {
            cfg.synthetic.outlier_fraction = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.synthetic.noise_sigma = v;
        }
        if let Some(v) = self.baseline_lambda {
            cfg.baseline.lambda = v;
        }
        if let Some(v) = self.k {
            cfg.baseline.k = Some(v);
        }
        if !self.grid.is_empty() {
            cfg.grid = Some(self.grid.clone());
        }
        if let Some(v) = self.locality_sigma {
            cfg.sampling.locality_sigma = Some(v);
        }
        if self.no_gt_injection {
            cfg.gt_injection = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TuneArgs {
    pub fn tune(&self) -> Result<(TuneSpace, TuneConfig), CliError> {
        let file = self.common.file()?;
        let parse = |key: &str| -> Result<Option<Value>, CliError> { Ok(file.get(key).cloned()) };
        let mut space: TuneSpace = match parse("space")? {
            Some(v) => {
                serde_json::from_value(v).map_err(|e| CliError::Usage(format!("space: {e}")))?
            }
            None => TuneSpace::default(),
        };
        let mut config: TuneConfig = match parse("tune")? {
            Some(v) => {
                serde_json::from_value(v).map_err(|e| CliError::Usage(format!("tune: {e}")))?
            }
            None => TuneConfig::default(),
        };
        if let [lo, hi] = self.lambda1_range[..] {
            space.lambda1_range = (lo, hi);
        }
        if let [lo, hi] = self.lambda2_range[..] {
            space.lambda2_range = (lo, hi);
        }
        if self.linear {
            space.log_scale = [false, false];
        }
        if let Some(v) = self.trials {
            config.n_trials = v;
            config.n_startup = config.n_startup.min(v);
        }
        if let Some(v) = self.startup {
            config.n_startup = v;
        }
        if let Some(v) = self.common.seed {
            config.seed = v;
        }
        space.validate()?;
        config.validate()?;
        Ok((space, config))
    }
}
