//! Windy lava-gap gridworld.
//!
//! The agent turns left, turns right or moves forward. Each step, before the
//! action resolves, the wind rotates the heading one quarter turn towards the
//! wind direction with probability `strength` (a heading opposite to the wind
//! turns clockwise). Entering lava ends the episode as a failure, reaching the
//! goal pays `+1`, every other step pays `0`. There is no built-in step limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{parse_value, Environment, StepResult};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn clockwise(self) -> Heading {
        Self::from_index(self.index() + 1)
    }

    pub fn counter_clockwise(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    pub fn opposite(self) -> Heading {
        Self::from_index(self.index() + 2)
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }
}

impl std::str::FromStr for Heading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "north" | "n" => Ok(Heading::North),
            "east" | "e" => Ok(Heading::East),
            "south" | "s" => Ok(Heading::South),
            "west" | "w" => Ok(Heading::West),
            other => Err(invalid(format!("unknown heading {other:?}"))),
        }
    }
}

/// One quarter turn from `heading` towards `wind`; unchanged when already aligned.
pub fn rotate_toward(heading: Heading, wind: Heading) -> Heading {
    if heading == wind {
        heading
    } else if heading.counter_clockwise() == wind {
        heading.counter_clockwise()
    } else {
        heading.clockwise()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindConfig {
    pub direction: Heading,
    /// Probability that the wind turns the agent on a given step.
    pub strength: f64,
}

impl WindConfig {
    pub fn new(direction: Heading, strength: f64) -> Result<Self> {
        let w = Self {
            direction,
            strength,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn calm() -> Self {
        Self {
            direction: Heading::South,
            strength: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(invalid(format!(
                "wind strength must lie in [0, 1], got {}",
                self.strength
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridAction {
    TurnLeft,
    TurnRight,
    Forward,
}

impl GridAction {
    pub const ALL: [GridAction; 3] = [
        GridAction::TurnLeft,
        GridAction::TurnRight,
        GridAction::Forward,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| invalid(format!("gridworld action index {i} out of range")))
    }
}

/// Layout parameters. Width and height include the wall ring, so the default
/// 7×7 grid has a 5×5 interior with `y` growing southwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub lava_column: usize,
    pub gap_row: usize,
    pub start: Cell,
    pub start_heading: Heading,
    pub goal: Cell,
    pub wind: WindConfig,
    pub max_episode_steps: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 7,
            height: 7,
            lava_column: 3,
            gap_row: 3,
            start: Cell::new(1, 1),
            start_heading: Heading::East,
            goal: Cell::new(5, 5),
            wind: WindConfig {
                direction: Heading::South,
                strength: 0.25,
            },
            max_episode_steps: None,
        }
    }
}

impl GridConfig {
    pub fn with_wind(mut self, direction: Heading, strength: f64) -> Self {
        self.wind = WindConfig {
            direction,
            strength,
        };
        self
    }

    pub(crate) fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "width" => self.width = parse_value(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "lava_column" => self.lava_column = parse_value(key, value)?,
            "gap_row" => self.gap_row = parse_value(key, value)?,
            "wind.direction" | "wind_direction" => self.wind.direction = value.parse()?,
            "wind.strength" | "wind_strength" => self.wind.strength = parse_value(key, value)?,
            "max_episode_steps" => {
                self.max_episode_steps = match value {
                    "none" | "" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown gridworld override {other:?}"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Wall,
    Floor,
    Lava,
    Goal,
}

/// Validated tile map built from a [`GridConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    start: Cell,
    start_heading: Heading,
    goal: Cell,
}

impl GridLayout {
    pub fn new(cfg: &GridConfig) -> Result<Self> {
        let (w, h) = (cfg.width, cfg.height);
        if w < 3 || h < 3 {
            return Err(invalid("grid must be at least 3x3 including walls"));
        }
        let interior = |c: Cell| c.x >= 1 && c.x < w - 1 && c.y >= 1 && c.y < h - 1;
        if !(1..w - 1).contains(&cfg.lava_column) {
            return Err(invalid("lava column must be an interior column"));
        }
        if !(1..h - 1).contains(&cfg.gap_row) {
            return Err(invalid("gap row must be an interior row"));
        }
        for (name, c) in [("start", cfg.start), ("goal", cfg.goal)] {
            if !interior(c) {
                return Err(invalid(format!(
                    "{name} cell {c:?} is not an interior cell"
                )));
            }
            if c.x == cfg.lava_column {
                return Err(invalid(format!("{name} cell lies in the lava column")));
            }
        }
        if (cfg.start.x < cfg.lava_column) == (cfg.goal.x < cfg.lava_column) {
            return Err(invalid(
                "start and goal must lie on opposite sides of the lava column",
            ));
        }
        cfg.wind.validate()?;

        let mut tiles = vec![Tile::Floor; w * h];
        for y in 0..h {
            for x in 0..w {
                let t = if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    Tile::Wall
                } else if x == cfg.lava_column && y != cfg.gap_row {
                    Tile::Lava
                } else {
                    Tile::Floor
                };
                tiles[y * w + x] = t;
            }
        }
        tiles[cfg.goal.y * w + cfg.goal.x] = Tile::Goal;
        Ok(Self {
            width: w,
            height: h,
            tiles,
            start: cfg.start,
            start_heading: cfg.start_heading,
            goal: cfg.goal,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start_state(&self) -> GridState {
        GridState {
            position: self.start,
            heading: self.start_heading,
        }
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn tile(&self, c: Cell) -> Tile {
        if c.x >= self.width || c.y >= self.height {
            return Tile::Wall;
        }
        self.tiles[c.y * self.width + c.x]
    }

    /// Cells an episode can be in without having terminated.
    pub fn is_live(&self, c: Cell) -> bool {
        self.tile(c) == Tile::Floor
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    /// Dense index over all `(cell, heading)` pairs, including non-floor cells.
    pub fn state_index(&self, s: GridState) -> usize {
        (s.position.y * self.width + s.position.x) * 4 + s.heading.index()
    }

    pub fn state_from_index(&self, idx: usize) -> GridState {
        let cell = idx / 4;
        GridState {
            position: Cell::new(cell % self.width, cell / self.width),
            heading: Heading::from_index(idx % 4),
        }
    }

    pub fn n_state_indices(&self) -> usize {
        self.width * self.height * 4
    }

    pub fn observation_dim(&self) -> usize {
        self.width * self.height + 4
    }

    /// One-hot cell followed by one-hot heading.
    pub fn encode(&self, s: GridState) -> Vec<f64> {
        let mut obs = vec![0.0; self.observation_dim()];
        obs[s.position.y * self.width + s.position.x] = 1.0;
        obs[self.width * self.height + s.heading.index()] = 1.0;
        obs
    }

    pub fn decode(&self, obs: &[f64]) -> Result<GridState> {
        if obs.len() != self.observation_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.observation_dim(),
                actual: obs.len(),
                context: "gridworld observation",
            });
        }
        let n_cells = self.width * self.height;
        let cell = crate::distcore::argmax_first(&obs[..n_cells]);
        let heading = crate::distcore::argmax_first(&obs[n_cells..]);
        Ok(GridState {
            position: Cell::new(cell % self.width, cell / self.width),
            heading: Heading::from_index(heading),
        })
    }

    fn ahead(&self, c: Cell, h: Heading) -> Cell {
        let (dx, dy) = h.delta();
        let nx = c.x as i64 + dx;
        let ny = c.y as i64 + dy;
        if nx < 0 || ny < 0 {
            return c;
        }
        Cell::new(nx as usize, ny as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub position: Cell,
    pub heading: Heading,
}

/// Deterministic result of one step once the wind draw is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome {
    pub next: GridState,
    pub reward: f64,
    pub terminal: bool,
    pub failure: bool,
}

/// Resolve one step given whether the wind turned the agent this step.
pub fn grid_transition(
    layout: &GridLayout,
    state: GridState,
    action: GridAction,
    wind: &WindConfig,
    wind_turned: bool,
) -> Result<TransitionOutcome> {
    if !layout.is_live(state.position) {
        return Err(Error::EpisodeTerminated);
    }
    let heading = if wind_turned {
        rotate_toward(state.heading, wind.direction)
    } else {
        state.heading
    };
    let mut next = GridState {
        position: state.position,
        heading,
    };
    match action {
        GridAction::TurnLeft => next.heading = heading.counter_clockwise(),
        GridAction::TurnRight => next.heading = heading.clockwise(),
        GridAction::Forward => {
            let target = layout.ahead(state.position, heading);
            match layout.tile(target) {
                Tile::Wall => {}
                Tile::Floor => next.position = target,
                Tile::Lava => {
                    next.position = target;
                    return Ok(TransitionOutcome {
                        next,
                        reward: 0.0,
                        terminal: true,
                        failure: true,
                    });
                }
                Tile::Goal => {
                    next.position = target;
                    return Ok(TransitionOutcome {
                        next,
                        reward: 1.0,
                        terminal: true,
                        failure: false,
                    });
                }
            }
        }
    }
    Ok(TransitionOutcome {
        next,
        reward: 0.0,
        terminal: false,
        failure: false,
    })
}

/// Sample one step: the wind turns the agent with probability `wind.strength`.
pub fn grid_step<R: Rng + ?Sized>(
    layout: &GridLayout,
    state: GridState,
    action: GridAction,
    wind: &WindConfig,
    rng: &mut R,
) -> Result<(GridState, StepResult)> {
    // Always draw so the random stream does not depend on the strength value.
    let draw: f64 = rng.gen();
    let out = grid_transition(layout, state, action, wind, draw < wind.strength)?;
    Ok((
        out.next,
        StepResult {
            observation: layout.encode(out.next),
            reward: out.reward,
            terminal: out.terminal,
            failure: out.failure,
            truncated: false,
        },
    ))
}

/// Gridworld episode runner.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    layout: GridLayout,
    state: GridState,
    rng: ChaCha8Rng,
    steps: usize,
    done: bool,
}

impl GridEnv {
    pub fn new(config: GridConfig) -> Result<Self> {
        let layout = GridLayout::new(&config)?;
        let state = layout.start_state();
        Ok(Self {
            config,
            layout,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            done: false,
        })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn set_wind(&mut self, wind: WindConfig) -> Result<()> {
        wind.validate()?;
        self.config.wind = wind;
        Ok(())
    }
}

impl Environment for GridEnv {
    fn observation_dim(&self) -> usize {
        self.layout.observation_dim()
    }

    fn n_actions(&self) -> usize {
        GridAction::ALL.len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.layout.start_state();
        self.steps = 0;
        self.done = false;
        self.layout.encode(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeTerminated);
        }
        let action = GridAction::from_index(action)?;
        let (next, mut res) = grid_step(
            &self.layout,
            self.state,
            action,
            &self.config.wind,
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
        let mut wind = self.config.wind;
        wind.strength = strength;
        self.set_wind(wind)
    }
}
