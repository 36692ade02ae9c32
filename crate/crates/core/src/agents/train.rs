//! Online training loop for the quantile-regression agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{QrAgent, ReplayBuffer, Transition};
use crate::envs::Environment;
use crate::error::{invalid, Result};
use crate::harness::seeds::split;
use crate::rnd::RndEstimator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub total_steps: usize,
    /// Evaluation callback period in environment steps; `None` disables it.
    pub eval_interval: Option<usize>,
    /// Episode length cap used during training when the environment has none.
    pub episode_step_cap: Option<usize>,
    /// `(step, strength)` pairs: from `step` on, new episodes use the given
    /// variation strength.
    pub variation_schedule: Vec<(usize, f64)>,
    /// Seed of the environment episode stream; episode `k` resets with `split(env_seed, k)`.
    pub env_seed: u64,
    /// Seed of the exploration and replay-sampling stream.
    pub exploration_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Risk level used to act at every environment step.
    pub alpha_trace: Vec<f64>,
    pub episodes: usize,
    pub failures: usize,
    /// Environment errors that forced an episode reset.
    pub env_errors: usize,
    pub updates: u64,
    /// `(step, strength)` for every scheduled variation change, at the step
    /// the first episode under the new strength started.
    pub variation_changes: Vec<(usize, f64)>,
    /// Transitions pushed into the replay buffer.
    pub transitions: u64,
    pub last_loss: Option<f64>,
}

fn check(
    agent: &QrAgent,
    rnd: Option<&RndEstimator>,
    env: &dyn Environment,
    settings: &TrainSettings,
) -> Result<()> {
    if env.observation_dim() != agent.observation_dim() || env.n_actions() != agent.n_actions() {
        return Err(invalid(format!(
            "environment is {}-d with {} actions, agent expects {}-d with {}",
            env.observation_dim(),
            env.n_actions(),
            agent.observation_dim(),
            agent.n_actions()
        )));
    }
    if agent.risk_policy().is_adaptive() {
        match rnd {
            None => return Err(invalid("adaptive risk policies need an RND estimator")),
            Some(r) if r.input_dim() != env.observation_dim() => {
                return Err(invalid(
                    "RND estimator input width differs from the observation width",
                ))
            }
            _ => {}
        }
    }
    if settings.eval_interval == Some(0) || settings.episode_step_cap == Some(0) {
        return Err(invalid(
            "evaluation interval and episode cap must be positive",
        ));
    }
    Ok(())
}

/// Interleave environment steps, replay insertion, RND and critic updates.
///
/// `on_eval(step, agent, rnd)` runs after every `eval_interval` steps. The RND
/// estimator is only trained for adaptive risk policies.
pub fn train(
    agent: &mut QrAgent,
    mut rnd: Option<&mut RndEstimator>,
    env: &mut dyn Environment,
    settings: &TrainSettings,
    on_eval: &mut dyn FnMut(usize, &QrAgent, Option<&RndEstimator>) -> Result<()>,
) -> Result<TrainOutcome> {
    check(agent, rnd.as_deref(), env, settings)?;
    let mut out = TrainOutcome::default();
    if settings.total_steps == 0 {
        return Ok(out);
    }
    let cfg = agent.config().clone();
    let adaptive = agent.risk_policy().is_adaptive();
    let fixed = agent.fixed_alpha();
    let mut replay = ReplayBuffer::new(cfg.replay_capacity, env.observation_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.exploration_seed);
    let cap = env.max_episode_steps().or(settings.episode_step_cap);
    let mut schedule = settings.variation_schedule.clone();
    schedule.sort_by_key(|&(step, _)| step);
    let mut schedule = schedule.into_iter().peekable();

    let mut start_episode =
        |env: &mut dyn Environment, out: &mut TrainOutcome, step: usize| -> Result<Vec<f64>> {
            while let Some(&(_, strength)) = schedule.peek().filter(|(at, _)| *at <= step) {
                env.set_variation(strength)?;
                out.variation_changes.push((step, strength));
                schedule.next();
            }
            let obs = env.reset(split(settings.env_seed, out.episodes as u64));
            out.episodes += 1;
            Ok(obs)
        };

    let mut obs = start_episode(env, &mut out, 0)?;
    let mut episode_steps = 0usize;
    for step in 1..=settings.total_steps {
        let alpha = match (fixed, rnd.as_deref()) {
            (Some(a), _) => a,
            (None, Some(r)) => r.risk_level(&obs)?,
            (None, None) => unreachable!("checked above"),
        };
        out.alpha_trace.push(alpha);
        let epsilon = cfg.exploration.value(step - 1, settings.total_steps);
        let action = agent.select_action(&obs, alpha, epsilon, &mut rng)?;
        let reset = match env.step(action) {
            Ok(r) => {
                episode_steps += 1;
                if r.failure {
                    out.failures += 1;
                }
                let truncated = r.truncated || cap.is_some_and(|c| episode_steps >= c);
                let done = r.terminal || truncated;
                replay.push(Transition {
                    observation: std::mem::take(&mut obs),
                    action,
                    reward: r.reward,
                    next_observation: r.observation.clone(),
                    terminal: r.terminal,
                })?;
                obs = r.observation;
                done
            }
            Err(_) => {
                out.env_errors += 1;
                true
            }
        };

        if step >= cfg.min_steps_before_training
            && replay.len() >= cfg.batch_size
            && step % cfg.train_frequency == 0
        {
            let batch = replay.sample(cfg.batch_size, &mut rng)?;
            let alphas: Vec<f64> = match rnd.as_deref_mut() {
                Some(r) if adaptive => {
                    let observations: Vec<&[f64]> = batch.iter().map(|t| t.observation).collect();
                    r.update(&observations)?;
                    batch
                        .iter()
                        .map(|t| r.risk_level(t.next_observation))
                        .collect::<Result<_>>()?
                }
                _ => vec![fixed.unwrap_or(1.0); batch.len()],
            };
            out.last_loss = Some(agent.qr_update(&batch, &alphas)?);
            out.updates += 1;
        }

        out.transitions = replay.total_pushed();
        if let Some(every) = settings.eval_interval {
            if step % every == 0 {
                on_eval(step, agent, rnd.as_deref())?;
            }
        }
        if reset && step < settings.total_steps {
            obs = start_episode(env, &mut out, step)?;
            episode_steps = 0;
        }
    }
    Ok(out)
}
