use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::TransitionRef;
use crate::approx::{Activation, AdamConfig, AdamState, Gradients, Mlp, MlpSpec};
use crate::distcore::{argmax_first, distorted_mean, quantile_midpoint, RiskPolicy};
use crate::error::{invalid, Error, Result};

/// Linear ε decay from `start` to `end` over the first `decay_fraction` of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.1,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = self.decay_fraction * total_steps as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * (step as f64 / horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.start) || !unit(self.end) || !unit(self.decay_fraction) {
            return Err(invalid("epsilon schedule values must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub n_quantiles: usize,
    pub huber_kappa: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub min_steps_before_training: usize,
    pub target_smoothing: f64,
    /// Environment steps between gradient updates.
    pub train_frequency: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub optimizer: AdamConfig,
    pub exploration: EpsilonSchedule,
    pub risk_policy: RiskPolicy,
    /// Use the risk-distorted argmax for the bootstrap action as well as for acting.
    pub distort_bootstrap: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            n_quantiles: 32,
            huber_kappa: 1.0,
            discount: 0.99,
            batch_size: 256,
            replay_capacity: 100_000,
            min_steps_before_training: 1_000,
            target_smoothing: 0.005,
            train_frequency: 1,
            hidden_layers: vec![64, 64],
            activation: Activation::Relu,
            optimizer: AdamConfig::default(),
            exploration: EpsilonSchedule::default(),
            risk_policy: RiskPolicy::Neutral,
            distort_bootstrap: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(invalid("discount must lie in (0, 1)"));
        }
        if !(self.huber_kappa > 0.0) {
            return Err(invalid("huber_kappa must be positive"));
        }
        if self.n_quantiles == 0
            || self.batch_size == 0
            || self.replay_capacity == 0
            || self.train_frequency == 0
        {
            return Err(invalid(
                "n_quantiles, batch_size, replay_capacity and train_frequency must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.target_smoothing) {
            return Err(invalid("target_smoothing must lie in [0, 1]"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        self.optimizer.validate()?;
        self.exploration.validate()?;
        self.risk_policy.validate()
    }
}

/// Huber function `L_κ`.
#[inline]
pub fn huber(delta: f64, kappa: f64) -> f64 {
    if delta.abs() <= kappa {
        0.5 * delta * delta
    } else {
        kappa * (delta.abs() - 0.5 * kappa)
    }
}

/// Mean over all `(i, j)` of `|τ_i − 1{δ_ij < 0}| · L_κ(δ_ij) / κ` with
/// `δ_ij = target_j − prediction_i`. Returns the loss and its gradient with
/// respect to the predictions.
pub fn quantile_huber_loss(prediction: &[f64], target: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let n = prediction.len();
    let scale = 1.0 / (n * target.len()) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (i, &theta) in prediction.iter().enumerate() {
        let tau = quantile_midpoint(i, n);
        for &y in target {
            let delta = y - theta;
            let weight = (tau - if delta < 0.0 { 1.0 } else { 0.0 }).abs();
            loss += weight * huber(delta, kappa) / kappa * scale;
            let dl = if delta.abs() <= kappa {
                delta
            } else {
                kappa * delta.signum()
            };
            grad[i] -= weight * dl / kappa * scale;
        }
    }
    (loss, grad)
}

/// Discrete-action quantile-regression Q-learner with a Polyak-averaged target critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrAgent {
    config: AgentConfig,
    n_actions: usize,
    critic: Mlp,
    target: Mlp,
    optimizer: AdamState,
    updates: u64,
}

impl QrAgent {
    pub fn new(
        observation_dim: usize,
        n_actions: usize,
        config: AgentConfig,
        init_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if observation_dim == 0 || n_actions == 0 {
            return Err(invalid(
                "observation width and action count must be positive",
            ));
        }
        let sizes: Vec<usize> = std::iter::once(observation_dim)
            .chain(config.hidden_layers.iter().copied())
            .chain([n_actions * config.n_quantiles])
            .collect();
        let critic = Mlp::new(&MlpSpec::new(sizes, config.activation, init_seed))?;
        Self::from_critic(critic, n_actions, config)
    }

    /// Wrap an existing critic whose output is `n_actions × n_quantiles` wide.
    pub fn from_critic(critic: Mlp, n_actions: usize, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        if critic.output_dim() != n_actions * config.n_quantiles {
            return Err(Error::DimensionMismatch {
                expected: n_actions * config.n_quantiles,
                actual: critic.output_dim(),
                context: "critic output width",
            });
        }
        Ok(Self {
            optimizer: AdamState::new(&critic, config.optimizer)?,
            target: critic.clone(),
            critic,
            config,
            n_actions,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn observation_dim(&self) -> usize {
        self.critic.input_dim()
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn risk_policy(&self) -> &RiskPolicy {
        &self.config.risk_policy
    }

    /// Set the Adam learning rate (used by tests to isolate Polyak mixing).
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.optimizer.config.learning_rate = learning_rate;
    }

    /// Quantile values for all actions, laid out as `a * N + i`.
    pub fn quantiles(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.critic.forward(observation)
    }

    /// Risk-neutral `Q(s, a)`: the mean of the predicted quantiles.
    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let z = self.quantiles(observation)?;
        let n = self.config.n_quantiles;
        Ok(z.chunks_exact(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect())
    }

    /// Risk level the policy uses when it does not adapt per state.
    pub fn fixed_alpha(&self) -> Option<f64> {
        self.config.risk_policy.fixed_alpha()
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("risk level {alpha} outside [0, 1]")));
        }
        Ok(())
    }

    /// Argmax of the CVaR-distorted values at level `alpha`, ties to the lowest index.
    pub fn greedy_action(&self, observation: &[f64], alpha: f64) -> Result<usize> {
        Self::check_alpha(alpha)?;
        let z = self.quantiles(observation)?;
        Ok(best_action(&z, self.config.n_quantiles, alpha))
    }

    /// ε-greedy over [`Self::greedy_action`]. The uniform draw is always taken
    /// so the random stream does not depend on ε.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        observation: &[f64],
        alpha: f64,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let explore: f64 = rng.gen();
        let random_action = rng.gen_range(0..self.n_actions);
        if explore < epsilon {
            Ok(random_action)
        } else {
            self.greedy_action(observation, alpha)
        }
    }

    /// One quantile-regression TD step on `batch`. `bootstrap_alphas[k]` is
    /// the risk level at the next observation of transition `k`.
    pub fn qr_update(
        &mut self,
        batch: &[TransitionRef<'_>],
        bootstrap_alphas: &[f64],
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(batch, bootstrap_alphas)?;
        self.optimizer.step(&mut self.critic, &grads)?;
        self.target
            .soft_update_from(&self.critic, self.config.target_smoothing)?;
        self.updates += 1;
        Ok(loss)
    }

    /// Batch-mean quantile Huber loss and its gradient for the online critic.
    pub fn loss_and_gradients(
        &self,
        batch: &[TransitionRef<'_>],
        bootstrap_alphas: &[f64],
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(invalid("empty training batch"));
        }
        if bootstrap_alphas.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                actual: bootstrap_alphas.len(),
                context: "bootstrap risk levels",
            });
        }
        let n = self.config.n_quantiles;
        let gamma = self.config.discount;
        let kappa = self.config.huber_kappa;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut total = 0.0;
        let mut out_grad = vec![0.0; self.critic.output_dim()];
        let mut target = vec![0.0; n];
        let inv_b = 1.0 / batch.len() as f64;
        for (t, &alpha) in batch.iter().zip(bootstrap_alphas) {
            if t.action >= self.n_actions {
                return Err(invalid("transition action out of range"));
            }
            if t.terminal {
                target.iter_mut().for_each(|y| *y = t.reward);
            } else {
                let z_next = self.target.forward(t.next_observation)?;
                let selection_alpha = if self.config.distort_bootstrap {
                    alpha
                } else {
                    1.0
                };
                Self::check_alpha(selection_alpha)?;
                let a_star = best_action(&z_next, n, selection_alpha);
                for (y, &z) in target.iter_mut().zip(&z_next[a_star * n..(a_star + 1) * n]) {
                    *y = t.reward + gamma * z;
                }
            }
            let trace = self.critic.forward_trace(t.observation)?;
            let pred = &trace.output()[t.action * n..(t.action + 1) * n];
            let (loss, g) = quantile_huber_loss(pred, &target, kappa);
            total += loss * inv_b;
            out_grad.iter_mut().for_each(|x| *x = 0.0);
            for (o, gi) in out_grad[t.action * n..(t.action + 1) * n]
                .iter_mut()
                .zip(&g)
            {
                *o = gi * inv_b;
            }
            self.critic
                .accumulate_gradients(&trace, &out_grad, &mut grads)?;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "quantile regression loss {total}"
            )));
        }
        Ok((total, grads))
    }
}

fn best_action(z: &[f64], n: usize, alpha: f64) -> usize {
    let scores: Vec<f64> = z
        .chunks_exact(n)
        .map(|c| distorted_mean(c, alpha))
        .collect();
    argmax_first(&scores)
}
