//! Outlier-robust multi-model fitting as a maximum set-coverage QUBO.
//!
//! Points and sampled model hypotheses become a binary preference matrix,
//! the preference matrix becomes a QUBO over point and model indicators, and
//! any [`QuboSolver`] minimizes it. Large hypothesis pools are pruned by
//! [`fit_derqumf`] through repeated rounds of small sub-problems.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod pipeline;
pub mod preference;
pub mod qubo;
pub mod rng;
pub mod solvers;
pub mod tuning;

pub use error::{Error, Result};
pub use eval::{misclassification, misclassification_with, LabelMode, RunStats};
pub use geometry::{
    fit_least_squares, fit_minimal, generate_pentagon, generate_planes, residual,
    sample_hypotheses, sample_hypotheses_with, sample_hypotheses_with_gt, BoundingBox,
    ModelHypothesis, ModelKind, Point, PointSet, SamplingOptions, SyntheticConfig,
};
pub use pipeline::{
    assign_labels, fit_derqumf, fit_qumf_baseline, fit_rqumf, BaselineConfig, DecomposeConfig,
    FitResult, Method, Scene,
};
pub use preference::{build_preference, ConsensusConfig, PreferenceMatrix};
pub use qubo::{
    build_rqumf_qubo, fold_constraints, penalty_residual, LinearConstraint, QuboParams,
    QuboProblem, VarSplit,
};
pub use solvers::{
    best, solve_exhaustive, solve_sa, Exhaustive, ExternalConfig, ExternalSolver, QuboSolver,
    SaConfig, SampleSet, ScheduleKind, SimulatedAnnealer, Solver,
};
