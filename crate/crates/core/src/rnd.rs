//! Random network distillation: a state-novelty signal and its mapping to a
//! per-state CVaR risk level.

use serde::{Deserialize, Serialize};

use crate::approx::{Activation, AdamConfig, AdamState, Gradients, Mlp, MlpSpec};
use crate::distcore::RiskMapping;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RndConfig {
    pub target_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub ema_decay: f64,
    pub warmup_updates: u64,
    pub optimizer: AdamConfig,
    pub mapping: RiskMapping,
}

impl Default for RndConfig {
    fn default() -> Self {
        Self {
            target_hidden: vec![64, 64],
            predictor_hidden: vec![64, 64, 64, 64],
            feature_dim: 32,
            activation: Activation::Relu,
            ema_decay: 0.99,
            warmup_updates: 100,
            optimizer: AdamConfig::default(),
            mapping: RiskMapping::default(),
        }
    }
}

impl RndConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(invalid("ema_decay must lie in (0, 1)"));
        }
        if self.feature_dim == 0 {
            return Err(invalid("feature_dim must be positive"));
        }
        self.optimizer.validate()?;
        self.mapping.validate()
    }

    fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain([output])
            .collect()
    }
}

/// Exponential moving average `m ← decay·m + (1 − decay)·x` started at 0,
/// without bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub value: f64,
    pub decay: f64,
    pub count: u64,
}

impl RunningMean {
    pub fn new(decay: f64) -> Self {
        Self {
            value: 0.0,
            decay,
            count: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * x;
        self.count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RndEstimator {
    target: Mlp,
    predictor: Mlp,
    optimizer: AdamState,
    running: RunningMean,
    warmup_updates: u64,
    mapping: RiskMapping,
}

impl RndEstimator {
    /// Build target and predictor with independent initialisations derived from `seed`.
    pub fn new(observation_dim: usize, config: &RndConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let target = Mlp::new(&MlpSpec::new(
            RndConfig::sizes(observation_dim, &config.target_hidden, config.feature_dim),
            config.activation,
            seed,
        ))?;
        let predictor = Mlp::new(&MlpSpec::new(
            RndConfig::sizes(
                observation_dim,
                &config.predictor_hidden,
                config.feature_dim,
            ),
            config.activation,
            seed ^ 0x9E37_79B9_7F4A_7C15,
        ))?;
        Self::from_networks(target, predictor, config)
    }

    pub fn from_networks(target: Mlp, predictor: Mlp, config: &RndConfig) -> Result<Self> {
        config.validate()?;
        if target.input_dim() != predictor.input_dim()
            || target.output_dim() != predictor.output_dim()
        {
            return Err(invalid(
                "target and predictor must share input and output widths",
            ));
        }
        Ok(Self {
            optimizer: AdamState::new(&predictor, config.optimizer)?,
            target,
            predictor,
            running: RunningMean::new(config.ema_decay),
            warmup_updates: config.warmup_updates,
            mapping: config.mapping,
        })
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp {
        &mut self.predictor
    }

    pub fn mapping(&self) -> RiskMapping {
        self.mapping
    }

    pub fn set_mapping(&mut self, mapping: RiskMapping) -> Result<()> {
        mapping.validate()?;
        self.mapping = mapping;
        Ok(())
    }

    pub fn running_mean_error(&self) -> f64 {
        self.running.value
    }

    pub fn updates(&self) -> u64 {
        self.running.count
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    /// `‖f(s) − g(s)‖²`.
    pub fn raw_error(&self, observation: &[f64]) -> Result<f64> {
        let f = self.target.forward(observation)?;
        let g = self.predictor.forward(observation)?;
        Ok(f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Raw error over the running mean; exactly 1 during warmup or while the
    /// mean is not positive.
    pub fn normalized_error(&self, observation: &[f64]) -> Result<f64> {
        let u = self.raw_error(observation)?;
        Ok(self.normalize(u))
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        if self.running.count < self.warmup_updates || self.running.value <= 0.0 {
            1.0
        } else {
            raw / self.running.value
        }
    }

    pub fn risk_level(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.mapping.risk_level(self.normalized_error(observation)?))
    }

    /// Mean squared feature error over the batch and its gradient with
    /// respect to the predictor parameters.
    pub fn loss_and_gradients<O: AsRef<[f64]>>(&self, batch: &[O]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(invalid("RND update needs a non-empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.predictor);
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; self.predictor.output_dim()];
        for obs in batch {
            let obs = obs.as_ref();
            let f = self.target.forward(obs)?;
            let trace = self.predictor.forward_trace(obs)?;
            for ((d, g), t) in out_grad.iter_mut().zip(trace.output()).zip(&f) {
                let diff = g - t;
                loss += diff * diff * scale;
                *d = 2.0 * diff * scale;
            }
            self.predictor
                .accumulate_gradients(&trace, &out_grad, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("RND predictor loss {loss}")));
        }
        Ok((loss, grads))
    }

    /// One Adam step on the predictor plus one EMA update with the batch-mean
    /// raw error measured before the step. Returns that mean.
    pub fn update<O: AsRef<[f64]>>(&mut self, batch: &[O]) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(batch)?;
        self.optimizer.step(&mut self.predictor, &grads)?;
        self.running.push(loss);
        Ok(loss)
    }
}
