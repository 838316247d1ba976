//! Goal-conditioned reconfiguration environment.
//!
//! Rewards: +10 on reaching the goal cell set, −1 for a no-op before that,
//! otherwise the reduction in configuration distance achieved by the move.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Action, ActionMask, Cell, Configuration, MoveRules};
use crate::matching::config_distance;

pub const DONE_REWARD: f64 = 10.0;
pub const NOOP_REWARD: f64 = -1.0;

/// A target shape: a face-connected cell set containing the origin, kept in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Cell>", into = "Vec<Cell>")]
pub struct GoalSpec {
    cells: Vec<Cell>,
}

impl GoalSpec {
    pub fn new(mut cells: Vec<Cell>) -> Result<Self> {
        geometry::validate_cells(&cells, "goal").map_err(Error::InvalidGoal)?;
        if !cells.contains(&Cell::ORIGIN) {
            return Err(Error::InvalidGoal("goal must contain the origin".into()));
        }
        cells.sort_unstable();
        Ok(GoalSpec { cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The same shape as a configuration: origin first, the rest in order.
    pub fn to_configuration(&self) -> Configuration {
        let mut cells = vec![Cell::ORIGIN];
        cells.extend(self.cells.iter().copied().filter(|&c| c != Cell::ORIGIN));
        Configuration::new(cells).expect("goal cells form a valid configuration")
    }
}

impl TryFrom<Vec<Cell>> for GoalSpec {
    type Error = Error;
    fn try_from(cells: Vec<Cell>) -> Result<Self> {
        GoalSpec::new(cells)
    }
}

impl From<GoalSpec> for Vec<Cell> {
    fn from(g: GoalSpec) -> Self {
        g.cells
    }
}

/// φ: the cell set a state occupies, as a goal.
pub fn achieved_goal(state: &Configuration) -> GoalSpec {
    GoalSpec { cells: state.sorted_cells() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    Line,
    Random,
}

/// Which way round the shaping term is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardSign {
    /// `D(s, g) − D(s', g)`: positive when the move gets closer.
    #[default]
    Progress,
    /// `D(s', g) − D(s, g)`, kept for ablation.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub modules: usize,
    pub max_steps: usize,
    pub start_mode: StartMode,
    pub strict_connectivity: bool,
    pub gamma: f64,
    pub reward_sign: RewardSign,
}

impl EnvConfig {
    pub fn new(modules: usize) -> Self {
        EnvConfig {
            modules,
            max_steps: default_max_steps(modules),
            start_mode: StartMode::Line,
            strict_connectivity: false,
            gamma: 0.98,
            reward_sign: RewardSign::Progress,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modules < 2 {
            return Err(Error::InvalidConfig(format!("modules must be at least 2, got {}", self.modules)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn rules(&self) -> MoveRules {
        MoveRules { strict_connectivity: self.strict_connectivity }
    }

    pub fn action_count(&self) -> usize {
        geometry::action_count(self.modules)
    }

    pub fn observation_dim(&self) -> usize {
        6 * self.modules
    }
}

/// Episode horizon: 50 for four modules, 100 for six, 25·(n−1) otherwise.
pub fn default_max_steps(n: usize) -> usize {
    match n {
        4 => 50,
        6 => 100,
        _ => 25 * n.saturating_sub(1).max(1),
    }
}

/// Grows a random polycube of `n` cells from the origin, adding a uniformly
/// chosen empty face neighbor of the current set each time.
pub fn sample_goal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GoalSpec {
    let mut cells = vec![Cell::ORIGIN];
    while cells.len() < n {
        let mut frontier: Vec<Cell> = cells
            .iter()
            .flat_map(|c| c.face_neighbors())
            .filter(|c| !cells.contains(c))
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        cells.push(*frontier.choose(rng).expect("a finite set always has empty neighbors"));
    }
    cells.sort_unstable();
    GoalSpec { cells }
}

pub fn reset<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> (Configuration, GoalSpec, ActionMask) {
    let start = match cfg.start_mode {
        StartMode::Line => Configuration::line(cfg.modules),
        StartMode::Random => sample_goal(cfg.modules, rng).to_configuration(),
    };
    let start_set = achieved_goal(&start);
    let goal = loop {
        let g = sample_goal(cfg.modules, rng);
        if g != start_set {
            break g;
        }
    };
    let mask = geometry::action_mask_with(&start, cfg.rules());
    (start, goal, mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next: Configuration,
    pub reward: f64,
    pub done: bool,
    /// Horizon reached without success.
    pub truncated: bool,
    pub mask: ActionMask,
}

/// Reward and done flag for a move from `state` to `next` under `goal`.
pub fn reward(
    state: &Configuration,
    is_noop: bool,
    next: &Configuration,
    goal: &GoalSpec,
    sign: RewardSign,
) -> (f64, bool) {
    if next.sorted_cells() == goal.cells() {
        return (DONE_REWARD, true);
    }
    if is_noop {
        return (NOOP_REWARD, false);
    }
    let before = config_distance(state.cells(), goal.cells()).expect("state and goal have equal sizes");
    let after = config_distance(next.cells(), goal.cells()).expect("state and goal have equal sizes");
    let shaped = match sign {
        RewardSign::Progress => before - after,
        RewardSign::Printed => after - before,
    };
    (shaped, false)
}

pub fn step(
    state: &Configuration,
    action_id: usize,
    goal: &GoalSpec,
    step_index: usize,
    cfg: &EnvConfig,
) -> Result<StepResult> {
    if goal.len() != state.len() {
        return Err(Error::SizeMismatch { expected: state.len(), got: goal.len() });
    }
    let action = geometry::decode_action(action_id, state.len())?;
    let next = geometry::apply_with(state, action, cfg.rules()).map_err(|e| match e {
        Error::InvalidMove(_) => Error::MaskedAction(action_id),
        other => other,
    })?;
    let (reward, done) = reward(state, action == Action::NoOp, &next, goal, cfg.reward_sign);
    let truncated = !done && step_index + 1 >= cfg.max_steps;
    let mask = geometry::action_mask_with(&next, cfg.rules());
    Ok(StepResult { next, reward, done, truncated, mask })
}

/// Network input: state cells in module order then goal cells, each
/// coordinate scaled by 1 / max(n − 1, 1).
pub fn encode_observation(state: &Configuration, goal: &GoalSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * state.len());
    encode_observation_into(state, goal, &mut out);
    out
}

pub fn encode_observation_into(state: &Configuration, goal: &GoalSpec, out: &mut Vec<f64>) {
    let scale = 1.0 / (state.len().saturating_sub(1).max(1)) as f64;
    for c in state.cells().iter().chain(goal.cells()) {
        out.extend([f64::from(c.x) * scale, f64::from(c.y) * scale, f64::from(c.z) * scale]);
    }
}

/// One environment instance with its own episode state.
#[derive(Clone, Debug)]
pub struct Env {
    cfg: EnvConfig,
    state: Configuration,
    goal: GoalSpec,
    mask: ActionMask,
    step_index: usize,
}

impl Env {
    pub fn new<R: Rng + ?Sized>(cfg: EnvConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (state, goal, mask) = reset(&cfg, rng);
        Ok(Env { cfg, state, goal, mask, step_index: 0 })
    }

    /// Starts a new episode toward a given goal.
    pub fn with_goal(cfg: EnvConfig, start: Configuration, goal: GoalSpec) -> Result<Self> {
        cfg.validate()?;
        if start.len() != cfg.modules || goal.len() != cfg.modules {
            return Err(Error::SizeMismatch { expected: cfg.modules, got: goal.len().min(start.len()) });
        }
        let mask = geometry::action_mask_with(&start, cfg.rules());
        Ok(Env { cfg, state: start, goal, mask, step_index: 0 })
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (state, goal, mask) = reset(&self.cfg, rng);
        self.state = state;
        self.goal = goal;
        self.mask = mask;
        self.step_index = 0;
    }

    pub fn step(&mut self, action_id: usize) -> Result<StepResult> {
        if !self.mask.is_valid(action_id) {
            return Err(Error::MaskedAction(action_id));
        }
        let result = step(&self.state, action_id, &self.goal, self.step_index, &self.cfg)?;
        self.state = result.next.clone();
        self.mask = result.mask.clone();
        self.step_index += 1;
        Ok(result)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    pub fn mask(&self) -> &ActionMask {
        &self.mask
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn observation(&self) -> Vec<f64> {
        encode_observation(&self.state, &self.goal)
    }
}

/// Serialized edge in trace records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub axis: geometry::Axis,
    pub s_u: i32,
    pub s_v: i32,
}

pub const TRACE_VERSION: u32 = 1;

/// One line of an episode trace (JSON Lines).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub version: u32,
    pub step: usize,
    pub action_id: usize,
    pub module: Option<usize>,
    pub edge: Option<EdgeRecord>,
    pub angle_deg: Option<i32>,
    pub cells_before: Vec<Cell>,
    pub cells_after: Vec<Cell>,
    pub reward: f64,
    pub done: bool,
    pub goal: Vec<Cell>,
}

impl TraceRecord {
    pub fn new(step: usize, action_id: usize, before: &Configuration, result: &StepResult, goal: &GoalSpec) -> Self {
        let (module, edge, angle_deg) = match geometry::decode_action(action_id, before.len()) {
            Ok(Action::Rotate(r)) => (
                Some(r.module),
                Some(EdgeRecord { axis: r.edge.axis, s_u: r.edge.s_u, s_v: r.edge.s_v }),
                Some(r.angle.degrees()),
            ),
            _ => (None, None, None),
        };
        TraceRecord {
            version: TRACE_VERSION,
            step,
            action_id,
            module,
            edge,
            angle_deg,
            cells_before: before.cells().to_vec(),
            cells_after: result.next.cells().to_vec(),
            reward: result.reward,
            done: result.done,
            goal: goal.cells().to_vec(),
        }
    }
}

/// Checks that replaying `records` from their first `cells_before` through
/// [`step`] reproduces every recorded transition, reward and done flag.
pub fn replay_trace(records: &[TraceRecord], cfg: &EnvConfig) -> Result<bool> {
    let Some(first) = records.first() else { return Ok(true) };
    let goal = GoalSpec::new(first.goal.clone())?;
    let mut state = Configuration::new(first.cells_before.clone())?;
    for (i, rec) in records.iter().enumerate() {
        if rec.cells_before != state.cells() || rec.goal != goal.cells() {
            return Ok(false);
        }
        let result = step(&state, rec.action_id, &goal, i, cfg)?;
        if result.next.cells() != rec.cells_after.as_slice() || result.reward != rec.reward || result.done != rec.done {
            return Ok(false);
        }
        state = result.next;
    }
    Ok(true)
}
