//! Seeded simulators: the windy lava gridworld and the dynamic corridor.

mod corridor;
mod grid;

pub use corridor::{
    corridor_step, CorridorAction, CorridorConfig, CorridorEnv, CorridorState, DynamicsMultipliers,
};
pub use grid::{
    grid_step, grid_transition, rotate_toward, Cell, GridAction, GridConfig, GridEnv, GridLayout,
    GridState, Heading, Tile, TransitionOutcome, WindConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Entered a failure state (lava, fall). Always implies `terminal`.
    pub failure: bool,
    /// Episode cut by the step limit; not a terminal state.
    pub truncated: bool,
}

/// Common interface the training and evaluation loops drive.
pub trait Environment: Send {
    fn observation_dim(&self) -> usize;

    fn n_actions(&self) -> usize;

    /// Start a new episode. Everything random in the episode is derived from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepResult>;

    fn max_episode_steps(&self) -> Option<usize>;

    fn set_max_episode_steps(&mut self, cap: Option<usize>);

    /// Change the strength of the environment perturbation (wind strength for
    /// the gridworld, dynamics variation fraction for the corridor). Takes
    /// effect from the next step or episode respectively.
    fn set_variation(&mut self, strength: f64) -> Result<()>;
}

/// Serializable description of an environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Gridworld(GridConfig),
    Corridor(CorridorConfig),
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Gridworld(c) => Box::new(GridEnv::new(c.clone())?),
            EnvSpec::Corridor(c) => Box::new(CorridorEnv::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Gridworld(_) => "gridworld",
            EnvSpec::Corridor(_) => "corridor",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Gridworld(c) => GridLayout::new(c).map(|_| ()),
            EnvSpec::Corridor(c) => c.validate(),
        }
    }

    /// Apply a `key=value` override, e.g. `wind.strength=0.9` or
    /// `variation_fraction=0.4`.
    pub fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            EnvSpec::Gridworld(c) => c.set_override(key, value),
            EnvSpec::Corridor(c) => c.set_override(key, value),
        }?;
        self.validate()
    }
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| crate::error::Error::Config(format!("cannot parse {value:?} for {key}")))
}
