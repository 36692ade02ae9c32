//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, EvaluationSettings};
use crate::envs::{Cell, CorridorConfig, EnvSpec, GridConfig, Heading, WindConfig};
use crate::error::{Error, Result};
use crate::rnd::RndConfig;

/// From `step` on, new training episodes use variation `strength`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationChange {
    pub step: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub agent: AgentConfig,
    pub rnd: RndConfig,
    pub seeds: Vec<u64>,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Evaluation episode cap for environments without their own limit.
    pub eval_step_cap: usize,
    /// Training episode cap for environments without their own limit.
    pub train_episode_cap: Option<usize>,
    pub variation_schedule: Vec<VariationChange>,
    pub output_dir: PathBuf,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            env: EnvSpec::Corridor(CorridorConfig::default()),
            agent: AgentConfig::default(),
            rnd: RndConfig::default(),
            seeds: vec![0],
            total_steps: 100_000,
            eval_interval: 10_000,
            eval_episodes: 50,
            eval_step_cap: 500,
            train_episode_cap: Some(500),
            variation_schedule: vec![],
            output_dir: PathBuf::from("results"),
            save_checkpoints: true,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_error("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(config_error("seeds must be distinct"));
        }
        if self.eval_interval == 0 || self.eval_interval > self.total_steps.max(1) {
            return Err(config_error(format!(
                "eval_interval must lie in [1, total_steps], got {}",
                self.eval_interval
            )));
        }
        if self.eval_episodes == 0 || self.eval_step_cap == 0 || self.train_episode_cap == Some(0) {
            return Err(config_error(
                "evaluation episodes and step caps must be positive",
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_error(format!(
                "invalid experiment name {:?}",
                self.name
            )));
        }
        self.env.validate()?;
        self.agent.validate()?;
        self.rnd.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Directory holding the files of this experiment.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

/// One evaluation setting of the gridworld sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindSetting {
    pub name: String,
    pub wind: WindConfig,
}

impl WindSetting {
    pub fn new(name: &str, direction: Heading, strength: f64) -> Self {
        Self {
            name: name.into(),
            wind: WindConfig {
                direction,
                strength,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    /// Layout and training wind.
    pub grid: GridConfig,
    pub tabular: EvaluationSettings,
    pub value_iteration_tolerance: f64,
    pub alphas: Vec<f64>,
    /// Evaluation settings; the first is the base setting.
    pub settings: Vec<WindSetting>,
    pub episodes: usize,
    pub eval_seed: u64,
    pub eval_step_cap: usize,
    pub output_dir: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            name: "gridworld_sweep".into(),
            grid: GridConfig {
                gap_row: 5,
                goal: Cell::new(5, 1),
                ..GridConfig::default()
            },
            tabular: EvaluationSettings {
                discount: 0.6,
                ..EvaluationSettings::default()
            },
            value_iteration_tolerance: 1e-10,
            alphas: (1..=9).map(|k| k as f64 / 10.0).collect(),
            settings: vec![
                WindSetting::new("light south", Heading::South, 0.25),
                WindSetting::new("strong south", Heading::South, 0.9),
                WindSetting::new("light north", Heading::North, 0.25),
                WindSetting::new("light east", Heading::East, 0.25),
            ],
            episodes: 100,
            eval_seed: 0,
            eval_step_cap: 1000,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.settings.is_empty() {
            return Err(config_error(
                "sweep needs at least one risk level and one setting",
            ));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(config_error(format!("risk level {a} outside [0, 1]")));
        }
        if self.episodes == 0 || self.eval_step_cap == 0 {
            return Err(config_error("sweep episodes and step cap must be positive"));
        }
        if !(self.value_iteration_tolerance > 0.0) {
            return Err(config_error("value iteration tolerance must be positive"));
        }
        for s in &self.settings {
            s.wind.validate()?;
        }
        crate::envs::GridLayout::new(&self.grid)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}
