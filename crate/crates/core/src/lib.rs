//! Adaptive risk-aware distributional reinforcement learning.

pub mod agents;
pub mod approx;
pub mod distcore;
pub mod envs;
pub mod error;
pub mod harness;
pub mod rnd;

pub use agents::{AgentConfig, QrAgent};
pub use approx::{Activation, Mlp};
pub use distcore::{MappingKind, QuantileDistribution, RiskMapping, RiskPolicy};
pub use envs::{EnvSpec, Environment, StepResult};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, MetricsRecord, SweepConfig, SweepResult};
pub use rnd::{RndConfig, RndEstimator};
