//! One-dimensional point mass on a ledge with hidden per-episode dynamics.
//!
//! The mass starts near the left end and has to be delivered to the right end
//! of the corridor. Both ends are drops: leaving on the left, or arriving at the
//! right end faster than `safe_arrival_speed`, is a fall. Mass and friction are
//! scaled by multipliers drawn uniformly from `[1 - v, 1 + v]` at every reset
//! and never appear in the observation `(x, v)`. An optional Gaussian kick of
//! standard deviation `velocity_noise·√dt` perturbs the velocity every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{parse_value, Environment, StepResult};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorConfig {
    pub length: f64,
    pub start_position: f64,
    pub mass_base: f64,
    pub friction_base: f64,
    pub push_force: f64,
    pub variation_fraction: f64,
    pub velocity_noise: f64,
    /// Largest speed at which reaching the far end counts as arriving.
    pub safe_arrival_speed: f64,
    pub dt: f64,
    pub action_cost: f64,
    pub fall_reward: f64,
    pub arrival_bonus: f64,
    pub max_episode_steps: Option<usize>,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            length: 10.0,
            start_position: 1.0,
            mass_base: 1.0,
            friction_base: 0.5,
            push_force: 1.0,
            variation_fraction: 0.2,
            velocity_noise: 0.0,
            safe_arrival_speed: 1.5,
            dt: 0.1,
            action_cost: 0.01,
            fall_reward: -1.0,
            arrival_bonus: 1.0,
            max_episode_steps: Some(500),
        }
    }
}

impl CorridorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("mass_base", self.mass_base),
            ("friction_base", self.friction_base),
            ("push_force", self.push_force),
            ("dt", self.dt),
            ("safe_arrival_speed", self.safe_arrival_speed),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.variation_fraction) {
            return Err(invalid(format!(
                "variation_fraction must lie in [0, 1), got {}",
                self.variation_fraction
            )));
        }
        if !(self.start_position > 0.0 && self.start_position < self.length) {
            return Err(invalid(
                "start_position must lie strictly inside the corridor",
            ));
        }
        // Coasting must never reverse or amplify the velocity.
        if self.friction_base * (1.0 + self.variation_fraction) * self.dt >= 1.0 {
            return Err(invalid("friction * dt too large for a stable Euler step"));
        }
        if !(self.velocity_noise.is_finite() && self.velocity_noise >= 0.0) {
            return Err(invalid("velocity_noise must be non-negative"));
        }
        if self.action_cost < 0.0 {
            return Err(invalid("action_cost must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "length" => self.length = parse_value(key, value)?,
            "start_position" => self.start_position = parse_value(key, value)?,
            "mass_base" => self.mass_base = parse_value(key, value)?,
            "friction_base" => self.friction_base = parse_value(key, value)?,
            "push_force" => self.push_force = parse_value(key, value)?,
            "variation_fraction" => self.variation_fraction = parse_value(key, value)?,
            "velocity_noise" => self.velocity_noise = parse_value(key, value)?,
            "safe_arrival_speed" => self.safe_arrival_speed = parse_value(key, value)?,
            "max_episode_steps" => {
                self.max_episode_steps = match value {
                    "none" | "" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown corridor override {other:?}"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorridorAction {
    PushLeft,
    PushRight,
    Coast,
}

impl CorridorAction {
    pub const ALL: [CorridorAction; 3] = [Self::PushLeft, Self::PushRight, Self::Coast];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| invalid(format!("corridor action index {i} out of range")))
    }

    /// Signed push in units of the configured force.
    pub fn push(self) -> f64 {
        match self {
            Self::PushLeft => -1.0,
            Self::PushRight => 1.0,
            Self::Coast => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorState {
    pub position: f64,
    pub velocity: f64,
}

impl CorridorState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsMultipliers {
    pub mass: f64,
    pub friction: f64,
}

impl DynamicsMultipliers {
    pub const NOMINAL: Self = Self {
        mass: 1.0,
        friction: 1.0,
    };

    pub fn sample<R: Rng + ?Sized>(variation: f64, rng: &mut R) -> Self {
        let mut draw = || 1.0 + variation * (2.0 * rng.gen::<f64>() - 1.0);
        let mass = draw();
        let friction = draw();
        Self { mass, friction }
    }
}

/// Semi-implicit Euler step of the point mass:
/// `v' = v + dt·(F/m − k·v) + σ·√dt·ξ`, `x' = x + dt·v'`.
/// No random number is drawn when `velocity_noise` is zero.
pub fn corridor_step<R: Rng + ?Sized>(
    state: CorridorState,
    action: CorridorAction,
    config: &CorridorConfig,
    mult: DynamicsMultipliers,
    rng: &mut R,
) -> Result<(CorridorState, StepResult)> {
    if !(state.position.is_finite() && state.velocity.is_finite()) {
        return Err(Error::NonFinite(format!("corridor state {state:?}")));
    }
    if state.position < 0.0 || state.position >= config.length {
        return Err(Error::EpisodeTerminated);
    }
    let push = action.push() * config.push_force;
    let mass = config.mass_base * mult.mass;
    let friction = config.friction_base * mult.friction;
    let accel = push / mass - friction * state.velocity;
    let mut velocity = state.velocity + config.dt * accel;
    if config.velocity_noise > 0.0 {
        let xi: f64 = rng.sample(StandardNormal);
        velocity += config.velocity_noise * config.dt.sqrt() * xi;
    }
    let position = state.position + config.dt * velocity;
    let next = CorridorState { position, velocity };

    let mut reward = (position - state.position) - config.action_cost * push.abs();
    let mut terminal = false;
    let mut failure = false;
    if position < 0.0 {
        terminal = true;
        failure = true;
        reward = config.fall_reward;
    } else if position >= config.length {
        terminal = true;
        if velocity.abs() <= config.safe_arrival_speed {
            reward += config.arrival_bonus;
        } else {
            failure = true;
            reward = config.fall_reward;
        }
    }
    Ok((
        next,
        StepResult {
            observation: next.observation(),
            reward,
            terminal,
            failure,
            truncated: false,
        },
    ))
}

/// Corridor episode runner.
#[derive(Debug, Clone)]
pub struct CorridorEnv {
    config: CorridorConfig,
    state: CorridorState,
    multipliers: DynamicsMultipliers,
    rng: ChaCha8Rng,
    steps: usize,
    done: bool,
}

impl CorridorEnv {
    pub fn new(config: CorridorConfig) -> Result<Self> {
        config.validate()?;
        let state = CorridorState {
            position: config.start_position,
            velocity: 0.0,
        };
        Ok(Self {
            config,
            state,
            multipliers: DynamicsMultipliers::NOMINAL,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &CorridorConfig {
        &self.config
    }

    pub fn state(&self) -> CorridorState {
        self.state
    }

    pub fn multipliers(&self) -> DynamicsMultipliers {
        self.multipliers
    }
}

impl Environment for CorridorEnv {
    fn observation_dim(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        CorridorAction::ALL.len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.multipliers = if self.config.variation_fraction == 0.0 {
            DynamicsMultipliers::NOMINAL
        } else {
            DynamicsMultipliers::sample(self.config.variation_fraction, &mut self.rng)
        };
        self.state = CorridorState {
            position: self.config.start_position,
            velocity: 0.0,
        };
        self.steps = 0;
        self.done = false;
        self.state.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeTerminated);
        }
        let action = CorridorAction::from_index(action)?;
        let (next, mut res) = corridor_step(
            self.state,
            action,
            &self.config,
            self.multipliers,
            &mut self.rng,
        )?;
        self.state = next;
        self.steps += 1;
        if !res.terminal {
            if let Some(cap) = self.config.max_episode_steps {
                res.truncated = self.steps >= cap;
            }
        }
        self.done = res.terminal || res.truncated;
        Ok(res)
    }

    fn max_episode_steps(&self) -> Option<usize> {
        self.config.max_episode_steps
    }

    fn set_max_episode_steps(&mut self, cap: Option<usize>) {
        self.config.max_episode_steps = cap;
    }

    fn set_variation(&mut self, strength: f64) -> Result<()> {
        let mut c = self.config.clone();
        c.variation_fraction = strength;
        c.validate()?;
        self.config = c;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> CorridorConfig {
        CorridorConfig::default()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn coasting_at_rest_stays_put() {
        let s = CorridorState {
            position: 4.0,
            velocity: 0.0,
        };
        let (next, r) = corridor_step(
            s,
            CorridorAction::Coast,
            &cfg(),
            DynamicsMultipliers::NOMINAL,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(next.position, 4.0);
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminal);
    }

    #[test]
    fn push_right_euler_update() {
        // v' = 0 + 0.1 * (1/1 - 0.5 * 0) = 0.1, x' = x + 0.1 * 0.1
        let s = CorridorState {
            position: 2.0,
            velocity: 0.0,
        };
        let (next, r) = corridor_step(
            s,
            CorridorAction::PushRight,
            &cfg(),
            DynamicsMultipliers::NOMINAL,
            &mut rng(),
        )
        .unwrap();
        assert!((next.velocity - 0.1).abs() < 1e-15);
        assert!((next.position - 2.01).abs() < 1e-12);
        assert!((r.reward - (0.01 - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn leaving_either_end_is_a_fall() {
        let c = cfg();
        let s = CorridorState {
            position: 0.02,
            velocity: -1.0,
        };
        let (_, r) = corridor_step(
            s,
            CorridorAction::Coast,
            &c,
            DynamicsMultipliers::NOMINAL,
            &mut rng(),
        )
        .unwrap();
        assert!(r.failure && r.terminal);
        assert_eq!(r.reward, -1.0);

        let s = CorridorState {
            position: c.length - 0.05,
            velocity: 3.0,
        };
        let (_, r) = corridor_step(
            s,
            CorridorAction::PushRight,
            &c,
            DynamicsMultipliers::NOMINAL,
            &mut rng(),
        )
        .unwrap();
        assert!(r.failure && r.terminal);
        assert_eq!(r.reward, -1.0);
    }

    #[test]
    fn slow_arrival_earns_bonus() {
        let c = cfg();
        let s = CorridorState {
            position: c.length - 0.05,
            velocity: 1.0,
        };
        let (next, r) = corridor_step(
            s,
            CorridorAction::Coast,
            &c,
            DynamicsMultipliers::NOMINAL,
            &mut rng(),
        )
        .unwrap();
        assert!(r.terminal && !r.failure);
        let disp = next.position - s.position;
        assert!((r.reward - (disp + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_nan_and_terminal_states() {
        let s = CorridorState {
            position: f64::NAN,
            velocity: 0.0,
        };
        assert!(corridor_step(
            s,
            CorridorAction::Coast,
            &cfg(),
            DynamicsMultipliers::NOMINAL,
            &mut rng()
        )
        .is_err());
        let s = CorridorState {
            position: -0.1,
            velocity: 0.0,
        };
        assert!(corridor_step(
            s,
            CorridorAction::Coast,
            &cfg(),
            DynamicsMultipliers::NOMINAL,
            &mut rng()
        )
        .is_err());
    }

    #[test]
    fn reset_is_seeded() {
        let mut env = CorridorEnv::new(cfg()).unwrap();
        let o1 = env.reset(17);
        let m1 = env.multipliers();
        let o2 = env.reset(17);
        assert_eq!(o1, o2);
        assert_eq!(m1, env.multipliers());
        env.reset(18);
        assert_ne!(m1, env.multipliers());
        for seed in 0..200 {
            env.reset(seed);
            let m = env.multipliers();
            assert!((0.8..=1.2).contains(&m.mass));
            assert!((0.8..=1.2).contains(&m.friction));
        }
    }

    #[test]
    fn zero_variation_gives_nominal_multipliers() {
        let mut c = cfg();
        c.variation_fraction = 0.0;
        let mut env = CorridorEnv::new(c).unwrap();
        env.reset(99);
        assert_eq!(env.multipliers(), DynamicsMultipliers::NOMINAL);
    }

    #[test]
    fn truncates_at_step_cap() {
        let mut c = cfg();
        c.max_episode_steps = Some(3);
        let mut env = CorridorEnv::new(c).unwrap();
        env.reset(0);
        assert!(!env.step(2).unwrap().truncated);
        assert!(!env.step(2).unwrap().truncated);
        let r = env.step(2).unwrap();
        assert!(r.truncated && !r.terminal);
        assert!(env.step(2).is_err());
    }

    #[test]
    fn variation_is_validated() {
        let mut env = CorridorEnv::new(cfg()).unwrap();
        assert!(env.set_variation(0.4).is_ok());
        assert_eq!(env.config().variation_fraction, 0.4);
        assert!(env.set_variation(1.0).is_err());
    }

    #[test]
    fn velocity_kicks_have_the_configured_spread() {
        let mut c = cfg();
        c.velocity_noise = 0.4;
        let mut r = rng();
        let s = CorridorState {
            position: 5.0,
            velocity: 0.0,
        };
        let kicks: Vec<f64> = (0..20_000)
            .map(|_| {
                corridor_step(
                    s,
                    CorridorAction::Coast,
                    &c,
                    DynamicsMultipliers::NOMINAL,
                    &mut r,
                )
                .unwrap()
                .0
                .velocity
            })
            .collect();
        let mean = kicks.iter().sum::<f64>() / kicks.len() as f64;
        let sd =
            (kicks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / kicks.len() as f64).sqrt();
        let expected = 0.4 * 0.1f64.sqrt();
        assert!(mean.abs() < 0.005, "{mean}");
        assert!(
            (sd - expected).abs() < 0.005 * expected.max(1.0),
            "{sd} vs {expected}"
        );
        c.velocity_noise = -0.1;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn coasting_never_speeds_up(x in 0.5f64..9.0, v in -3.0f64..3.0, m in 0.6f64..1.4, f in 0.6f64..1.4) {
            let s = CorridorState { position: x, velocity: v };
            let mult = DynamicsMultipliers { mass: m, friction: f };
            let (next, r) = corridor_step(s, CorridorAction::Coast, &cfg(), mult, &mut rng()).unwrap();
            prop_assert!(next.velocity.abs() <= v.abs());
            prop_assert!(!r.failure || r.terminal);
        }

        #[test]
        fn same_seed_same_trajectory(seed in any::<u64>(), actions in prop::collection::vec(0usize..3, 1..200)) {
            let run = |seed: u64| {
                let mut env = CorridorEnv::new(CorridorConfig { velocity_noise: 0.4, ..cfg() }).unwrap();
                let mut trace = vec![env.reset(seed)];
                for &a in &actions {
                    match env.step(a) {
                        Ok(r) => {
                            let end = r.terminal || r.truncated;
                            trace.push(r.observation);
                            if end { break; }
                        }
                        Err(_) => break,
                    }
                }
                trace
            };
            let a = run(seed);
            let b = run(seed);
            prop_assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(&b) {
                prop_assert_eq!(p[0].to_bits(), q[0].to_bits());
                prop_assert_eq!(p[1].to_bits(), q[1].to_bits());
            }
        }
    }
}
