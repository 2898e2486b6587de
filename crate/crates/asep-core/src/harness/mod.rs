//! Experiment orchestration: configuration, replica ensembles, mode
//! drivers and flat-file persistence.

pub mod config;
pub mod ensemble;
pub mod experiment;
pub mod output;

pub use config::{ExperimentSpec, InitialSpec, Mode, ScalingSpec, ScheduleSpec};
pub use ensemble::{map_replicas, map_replicas_sequential};
pub use experiment::{
    block_residual_ensemble, compare, ensemble_mean_smoothed, otto_test_functions, run_ensemble,
    run_experiment, uniform_times, BlockResidualEnsemble, DistanceTable, HydroRow, PhaseRow,
    RunOutcome, StationaryRow,
};
pub use output::{DiagnosticRow, OutputWriter, RunManifest, TaskManifest};
