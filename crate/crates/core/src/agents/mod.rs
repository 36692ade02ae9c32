//! Tabular distributional evaluation and the neural quantile-regression agent.

mod qr;
mod replay;
pub mod tabular;
mod train;

pub use qr::{huber, quantile_huber_loss, AgentConfig, EpsilonSchedule, QrAgent};
pub use replay::{ReplayBuffer, Transition, TransitionRef};
pub use tabular::{
    bellman_residual, distributional_policy_evaluation, policy_evaluation, project_mixture,
    value_iteration, EvaluationSettings, FiniteMdp, GridMdp, Outcome, Projection, QTable,
    QuantileTable,
};
pub use train::{train, TrainOutcome, TrainSettings};
