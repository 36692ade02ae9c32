//! Experiment orchestration: seeds, evaluation, sweeps, metrics and reports.

pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod report;
pub mod run;
pub mod seeds;
pub mod sweep;

pub use config::{ExperimentConfig, SweepConfig, VariationChange, WindSetting};
pub use evaluate::{
    evaluate, q_estimation_error, AgentPolicy, EvalSettings, EvalSummary, Policy, TablePolicy,
};
pub use metrics::{aggregate, mean_stderr, AggregateRecord, MetricsRecord};
pub use report::{report, ReportSummary, SWEEP_JSON};
pub use run::{
    load_checkpoint, run_experiment, run_seed, Checkpoint, ExperimentResult, Manifest, SeedRun,
};
pub use seeds::{split, splitmix64, SeedStreams};
pub use sweep::{alpha_sweep, run_sweep, train_table, SweepResult, SweepRow, TrainedTable};
