//! Greedy evaluation rollouts.

use serde::{Deserialize, Serialize};

use super::seeds::split;
use crate::agents::{GridMdp, QrAgent, QuantileTable};
use crate::envs::{Environment, GridLayout};
use crate::error::{invalid, Result};
use crate::rnd::RndEstimator;

/// A deterministic acting rule used for evaluation.
pub trait Policy {
    /// Chosen action and the risk level it was chosen under.
    fn act(&self, observation: &[f64]) -> Result<(usize, f64)>;

    /// Risk-neutral expected return of `action` at `observation`.
    fn expected_value(&self, observation: &[f64], action: usize) -> Result<f64>;
}

/// The neural agent acting greedily, with the per-state RND risk level for
/// adaptive policies.
pub struct AgentPolicy<'a> {
    pub agent: &'a QrAgent,
    pub rnd: Option<&'a RndEstimator>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(agent: &'a QrAgent, rnd: Option<&'a RndEstimator>) -> Result<Self> {
        if agent.risk_policy().is_adaptive() && rnd.is_none() {
            return Err(invalid("adaptive risk policies need an RND estimator"));
        }
        Ok(Self { agent, rnd })
    }

    pub fn risk_alpha(&self, observation: &[f64]) -> Result<f64> {
        match (self.agent.fixed_alpha(), self.rnd) {
            (Some(a), _) => Ok(a),
            (None, Some(rnd)) => rnd.risk_level(observation),
            (None, None) => Err(invalid("adaptive risk policies need an RND estimator")),
        }
    }
}

impl Policy for AgentPolicy<'_> {
    fn act(&self, observation: &[f64]) -> Result<(usize, f64)> {
        let alpha = self.risk_alpha(observation)?;
        Ok((self.agent.greedy_action(observation, alpha)?, alpha))
    }

    fn expected_value(&self, observation: &[f64], action: usize) -> Result<f64> {
        Ok(self.agent.q_values(observation)?[action])
    }
}

/// A gridworld quantile table acting under CVaR at a fixed level.
pub struct TablePolicy<'a> {
    pub layout: &'a GridLayout,
    pub mdp: &'a GridMdp,
    pub table: &'a QuantileTable,
    pub alpha: f64,
}

impl TablePolicy<'_> {
    fn state(&self, observation: &[f64]) -> Result<usize> {
        let s = self.layout.decode(observation)?;
        self.mdp
            .index_of(&s)
            .ok_or_else(|| invalid(format!("state {s:?} is not covered by the table")))
    }
}

impl Policy for TablePolicy<'_> {
    fn act(&self, observation: &[f64]) -> Result<(usize, f64)> {
        Ok((
            self.table.select(self.state(observation)?, self.alpha),
            self.alpha,
        ))
    }

    fn expected_value(&self, observation: &[f64], action: usize) -> Result<f64> {
        Ok(self.table.expectation(self.state(observation)?, action))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_episodes: usize,
    pub seed: u64,
    pub discount: f64,
    /// Step cap for environments without their own limit.
    pub step_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub failure_rate: f64,
    pub mean_risk_alpha: f64,
    pub returns: Vec<f64>,
    pub discounted_returns: Vec<f64>,
    pub initial_values: Vec<f64>,
    pub failures: usize,
}

impl EvalSummary {
    /// Mean initial risk-neutral estimate minus the best empirical discounted return.
    pub fn q_estimation_error(&self) -> f64 {
        q_estimation_error_from(&self.initial_values, &self.discounted_returns)
    }
}

pub fn q_estimation_error_from(initial_values: &[f64], discounted_returns: &[f64]) -> f64 {
    let q_hat = initial_values.iter().sum::<f64>() / initial_values.len() as f64;
    let best = discounted_returns
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    q_hat - best
}

/// Greedy rollouts; episode `k` resets the environment with `split(seed, k)`.
pub fn evaluate(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    settings: &EvalSettings,
) -> Result<EvalSummary> {
    if settings.n_episodes == 0 {
        return Err(invalid("evaluation needs at least one episode"));
    }
    let cap = env.max_episode_steps().unwrap_or(settings.step_cap);
    if cap == 0 {
        return Err(invalid("evaluation step cap must be positive"));
    }
    let mut returns = Vec::with_capacity(settings.n_episodes);
    let mut discounted = Vec::with_capacity(settings.n_episodes);
    let mut initial = Vec::with_capacity(settings.n_episodes);
    let mut failures = 0;
    let mut alpha_sum = 0.0;
    let mut alpha_count = 0usize;
    for k in 0..settings.n_episodes {
        let mut obs = env.reset(split(settings.seed, k as u64));
        let (mut g, mut g_disc, mut scale) = (0.0, 0.0, 1.0);
        for t in 0..cap {
            let (action, alpha) = policy.act(&obs)?;
            if t == 0 {
                initial.push(policy.expected_value(&obs, action)?);
            }
            alpha_sum += alpha;
            alpha_count += 1;
            let r = env.step(action)?;
            g += r.reward;
            g_disc += scale * r.reward;
            scale *= settings.discount;
            if r.failure {
                failures += 1;
            }
            if r.terminal || r.truncated {
                break;
            }
            obs = r.observation;
        }
        returns.push(g);
        discounted.push(g_disc);
    }
    let n = settings.n_episodes as f64;
    Ok(EvalSummary {
        mean_return: returns.iter().sum::<f64>() / n,
        failure_rate: failures as f64 / n,
        mean_risk_alpha: if alpha_count > 0 {
            alpha_sum / alpha_count as f64
        } else {
            1.0
        },
        returns,
        discounted_returns: discounted,
        initial_values: initial,
        failures,
    })
}

/// Q-estimation error of a policy over `n_episodes` greedy rollouts.
pub fn q_estimation_error(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    settings: &EvalSettings,
) -> Result<f64> {
    Ok(evaluate(policy, env, settings)?.q_estimation_error())
}
