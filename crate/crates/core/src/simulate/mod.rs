//! Monte Carlo phase-estimation experiments.

mod estimator;
mod sampling;
mod trials;

pub use estimator::{
    biased_demo_estimator, count_outcomes, ml_estimate, LikelihoodTable, MlEstimate, MlSpec,
};
pub use sampling::{sample_outcomes, ShotSampler, ShotStream, TaggedOutcome};
pub use trials::{
    run_experiment, run_trials, run_trials_with_workers, variance_decomposition, workers_from_env,
    EstimateStats, EstimatorSpec, ExperimentConfig, SectorStats, SimulationReport, ThetaGridSpec,
    TransformSpec, WORKERS_ENV,
};
