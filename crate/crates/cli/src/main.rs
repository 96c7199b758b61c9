mod args;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rqumf::experiment::{
    battery_objective, fit_preference, make_instance, repeat_seed, run_bench, Scenario,
    SolverChoice,
};
use rqumf::preference::{build_preference, ConsensusConfig, PreferenceMatrix};
use rqumf::rng::derive_seed;
use rqumf::solvers::EXHAUSTIVE_LIMIT;
use rqumf::tuning::tune;
use rqumf::{
    misclassification_with, sample_hypotheses_with, sample_hypotheses_with_gt, FitResult, PointSet,
    Scene,
};
use serde_json::Value;

use args::{Cli, Command, Common, EvalArgs, TuneArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<rqumf::Error> for CliError {
    fn from(e: rqumf::Error) -> Self {
        use rqumf::Error::*;
        match e {
            InvalidConfig(_)
            | Parse { .. }
            | ShapeMismatch(_)
            | DimensionMismatch { .. }
            | TooLarge { .. }
            | Io { .. }
            | Json(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Tune(a) => cmd_tune(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RQUMF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!("RQUMF_THREADS={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(path, text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn cmd_generate(a: &Common) -> Result<()> {
    let cfg = a.experiment()?;
    let inst = make_instance(&cfg, repeat_seed(&cfg, 0))?;
    let mut csv = Vec::new();
    inst.points.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_out(a.out.as_deref(), &csv)?;
    if let Some(out) = &a.out {
        write_out(Some(&sibling(out, "models.json")), &to_json(&inst.truth)?)?;
    }
    Ok(())
}

fn check_exhaustive(solver: SolverChoice, vars: usize) -> Result<()> {
    if solver == SolverChoice::Exhaustive && vars > EXHAUSTIVE_LIMIT {
        return Err(CliError::Usage(format!(
            "exhaustive solver needs n + m <= {EXHAUSTIVE_LIMIT}, got {vars}"
        )));
    }
    Ok(())
}

fn cmd_fit(a: &Common) -> Result<()> {
    let cfg = a.experiment()?;
    let method = cfg.methods[0];
    let seed = repeat_seed(&cfg, 0);
    let fit: FitResult = if let Some(path) = &a.preference {
        let p = PreferenceMatrix::load(path)?;
        check_exhaustive(cfg.solver, p.n_points() + p.n_models())?;
        fit_preference(&cfg, method, &p, None, seed)?
    } else if let Some(path) = &a.points {
        let points = PointSet::load(path)?;
        let m = cfg.model_count();
        let sample_seed = derive_seed(seed, 1);
        let models = if cfg.gt_injection && points.gt_labels().is_some() {
            sample_hypotheses_with_gt(&points, cfg.kind(), m, sample_seed, &cfg.sampling)?
        } else {
            sample_hypotheses_with(&points, cfg.kind(), m, sample_seed, &cfg.sampling)?
        };
        let p = build_preference(&points, &models, &ConsensusConfig::new(cfg.epsilon())?)?;
        check_exhaustive(cfg.solver, p.n_points() + p.n_models())?;
        let scene = Scene {
            points: &points,
            models: &models,
        };
        fit_preference(&cfg, method, &p, Some(&scene), seed)?
    } else {
        if cfg.scenario == Scenario::IngestedPreference {
            return Err(CliError::Usage(
                "the ingested scenario needs --preference".into(),
            ));
        }
        let inst = make_instance(&cfg, seed)?;
        check_exhaustive(cfg.solver, inst.points.len() + inst.models.len())?;
        fit_preference(&cfg, method, &inst.preference, Some(&inst.scene()), seed)?
    };
    write_out(a.out.as_deref(), &(fit.to_json(!a.no_timestamp)? + "\n"))
}

fn cmd_bench(a: &Common) -> Result<()> {
    let cfg = a.experiment()?;
    let report = run_bench(&cfg)?;
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"));
    report.save(&dir)?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let cfg = a.common.experiment()?;
    if cfg.scenario == Scenario::IngestedPreference {
        return Err(CliError::Usage("tuning needs a synthetic scenario".into()));
    }
    let (space, config) = a.tune()?;
    let method = cfg.methods[0];
    let mut outcome = tune(&space, &config, |lambda1, lambda2| {
        battery_objective(&cfg, method, rqumf::QuboParams::new(lambda1, lambda2)?)
    })?;
    if a.common.no_timestamp {
        outcome.best.timestamp = None;
        for t in &mut outcome.history {
            t.timestamp = None;
        }
    }
    write_out(a.common.out.as_deref(), &to_json(&outcome)?)?;
    if let Some(out) = &a.common.out {
        let mut csv = Vec::new();
        outcome.write_history_csv(&mut csv, !a.common.no_timestamp)?;
        let csv = String::from_utf8(csv).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_out(Some(&sibling(out, "history.csv")), &csv)?;
    }
    Ok(())
}

/// Labels from a labelled point CSV, a FitResult JSON or a bare JSON array.
fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        let points = PointSet::load(path)?;
        return points
            .gt_labels()
            .map(<[usize]>::to_vec)
            .ok_or_else(|| CliError::Usage(format!("{}: no label column", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let labels = match value {
        Value::Object(mut map) => map.remove("labels").unwrap_or(Value::Null),
        v => v,
    };
    serde_json::from_value(labels)
        .map_err(|e| CliError::Usage(format!("{}: labels: {e}", path.display())))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let gt = load_labels(&a.gt)?;
    let est = load_labels(&a.result)?;
    let report = misclassification_with(&gt, &est, a.mode())?;
    match &a.out {
        Some(out) => {
            write_out(Some(out), &to_json(&report)?)?;
            println!("e_mis {:.4}", report.e_mis);
            Ok(())
        }
        None => write_out(None, &to_json(&report)?),
    }
}
