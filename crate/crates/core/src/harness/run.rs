//! Multi-seed experiment runner.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::evaluate::{evaluate, AgentPolicy, EvalSettings};
use super::metrics::{aggregate, write_csv, AggregateRecord, MetricsRecord};
use super::seeds::SeedStreams;
use crate::agents::{train, QrAgent, TrainOutcome, TrainSettings};
use crate::distcore::RiskPolicy;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::rnd::{RndConfig, RndEstimator};

/// Everything produced by one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub outcome: TrainOutcome,
    pub agent: QrAgent,
    pub rnd: Option<RndEstimator>,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    /// Seeds that failed, with the error message.
    pub failures: Vec<(u64, String)>,
    pub aggregate: Vec<AggregateRecord>,
    pub run_dir: PathBuf,
}

/// Checkpoint manifest written next to the serialized networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub total_steps: usize,
    pub critic_updates: u64,
    pub episodes: usize,
    pub replay_transitions: u64,
    pub risk_policy: RiskPolicy,
    pub env: EnvSpec,
    pub agent_file: String,
    pub rnd_file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub agent: QrAgent,
    pub rnd: Option<RndEstimator>,
}

fn rnd_config(cfg: &ExperimentConfig) -> RndConfig {
    let mut rnd = cfg.rnd.clone();
    if let RiskPolicy::Ara { mapping } = cfg.agent.risk_policy {
        rnd.mapping = mapping;
    }
    rnd
}

/// Variation strength in force at `step`, if the schedule changed it.
fn variation_at(cfg: &ExperimentConfig, step: usize) -> Option<f64> {
    cfg.variation_schedule
        .iter()
        .filter(|c| c.step <= step)
        .max_by_key(|c| c.step)
        .map(|c| c.strength)
}

/// Train and periodically evaluate one seed without touching the file system.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let streams = SeedStreams::new(seed);
    let mut env = cfg.env.build()?;
    let mut eval_env = cfg.env.build()?;
    let mut agent = QrAgent::new(
        env.observation_dim(),
        env.n_actions(),
        cfg.agent.clone(),
        streams.init,
    )?;
    let mut rnd = if agent.risk_policy().is_adaptive() {
        Some(RndEstimator::new(
            env.observation_dim(),
            &rnd_config(cfg),
            streams.rnd,
        )?)
    } else {
        None
    };
    let settings = TrainSettings {
        total_steps: cfg.total_steps,
        eval_interval: Some(cfg.eval_interval),
        episode_step_cap: cfg.train_episode_cap,
        variation_schedule: cfg
            .variation_schedule
            .iter()
            .map(|c| (c.step, c.strength))
            .collect(),
        env_seed: streams.env,
        exploration_seed: streams.exploration,
    };
    let eval = EvalSettings {
        n_episodes: cfg.eval_episodes,
        seed: streams.eval,
        discount: cfg.agent.discount,
        step_cap: cfg.eval_step_cap,
    };
    let mut records = Vec::new();
    let outcome = train(
        &mut agent,
        rnd.as_mut(),
        env.as_mut(),
        &settings,
        &mut |step, agent, rnd| {
            if let Some(v) = variation_at(cfg, step) {
                eval_env.set_variation(v)?;
            }
            let summary = evaluate(&AgentPolicy::new(agent, rnd)?, eval_env.as_mut(), &eval)?;
            records.push(MetricsRecord {
                step,
                seed,
                mean_return: summary.mean_return,
                failure_rate: summary.failure_rate,
                mean_risk_alpha: summary.mean_risk_alpha,
                q_estimation_error: summary.q_estimation_error(),
            });
            Ok(())
        },
    )?;
    Ok(SeedRun {
        seed,
        records,
        outcome,
        agent,
        rnd,
    })
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

pub const AGGREGATE_CSV: &str = "aggregate.csv";

/// Run every seed in parallel and write metrics, traces and checkpoints under
/// `output_dir/name`. A failing seed is reported and the other seeds proceed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;

    let results: Vec<(u64, Result<SeedRun>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, run_seed(cfg, s)))
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r.and_then(|run| write_seed(cfg, &dir, &run).map(|_| run)) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    let failure_log = dir.join("failures.txt");
    if failures.is_empty() {
        if failure_log.exists() {
            std::fs::remove_file(&failure_log)?;
        }
    } else {
        let text: String = failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}\n"))
            .collect();
        std::fs::write(&failure_log, text)?;
    }
    let series: Vec<Vec<MetricsRecord>> = runs.iter().map(|r| r.records.clone()).collect();
    let agg = aggregate(&series);
    write_csv(&dir.join(AGGREGATE_CSV), &agg)?;
    Ok(ExperimentResult {
        runs,
        failures,
        aggregate: agg,
        run_dir: dir,
    })
}

/// Mean acting risk level over consecutive windows of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaWindow {
    pub step: usize,
    pub mean_alpha: f64,
}

pub fn alpha_windows(trace: &[f64], window: usize) -> Vec<AlphaWindow> {
    let window = window.max(1);
    trace
        .chunks(window)
        .enumerate()
        .map(|(k, c)| AlphaWindow {
            step: ((k + 1) * window).min(trace.len()),
            mean_alpha: c.iter().sum::<f64>() / c.len() as f64,
        })
        .collect()
}

pub const ALPHA_WINDOW: usize = 1000;

fn write_seed(cfg: &ExperimentConfig, dir: &Path, run: &SeedRun) -> Result<()> {
    write_csv(&dir.join(seed_csv_name(run.seed)), &run.records)?;
    write_csv(
        &dir.join(format!("alpha_trace_seed_{}.csv", run.seed)),
        &alpha_windows(&run.outcome.alpha_trace, ALPHA_WINDOW),
    )?;
    if cfg.save_checkpoints {
        let ck = dir.join("checkpoints").join(format!("seed_{}", run.seed));
        std::fs::create_dir_all(&ck)?;
        std::fs::write(ck.join("agent.json"), serde_json::to_string(&run.agent)?)?;
        let rnd_file = match &run.rnd {
            Some(r) => {
                std::fs::write(ck.join("rnd.json"), serde_json::to_string(r)?)?;
                Some("rnd.json".to_string())
            }
            None => None,
        };
        let mut env = cfg.env.clone();
        if let Some(v) = variation_at(cfg, cfg.total_steps) {
            env.set_override(
                match env {
                    EnvSpec::Corridor(_) => "variation_fraction",
                    EnvSpec::Gridworld(_) => "wind.strength",
                },
                &v.to_string(),
            )?;
        }
        let manifest = Manifest {
            seed: run.seed,
            total_steps: cfg.total_steps,
            critic_updates: run.agent.updates(),
            episodes: run.outcome.episodes,
            replay_transitions: run.outcome.transitions,
            risk_policy: cfg.agent.risk_policy,
            env,
            agent_file: "agent.json".into(),
            rnd_file,
        };
        std::fs::write(
            ck.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
    }
    Ok(())
}

/// Load a checkpoint directory written by [`run_experiment`].
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let agent: QrAgent =
        serde_json::from_str(&std::fs::read_to_string(dir.join(&manifest.agent_file))?)?;
    let rnd = match &manifest.rnd_file {
        Some(f) => Some(serde_json::from_str(&std::fs::read_to_string(
            dir.join(f),
        )?)?),
        None => None,
    };
    if agent.risk_policy().is_adaptive() && rnd.is_none() {
        return Err(Error::Config(
            "adaptive checkpoint without an RND estimator".into(),
        ));
    }
    Ok(Checkpoint {
        manifest,
        agent,
        rnd,
    })
}
