//! Agents, configuration records, sampled integration and pairwise geometry.
//!
//! Agents are discs executing planar velocity commands. Headings are tracked
//! for display only; no turning-rate limit is applied at execution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub position: Vec2,
    pub heading: f64,
    pub goal: Vec2,
    pub radius: f64,
    pub completed: bool,
}

impl AgentState {
    /// New agent facing its goal.
    pub fn new(id: usize, position: Vec2, goal: Vec2, radius: f64) -> Self {
        let heading = (goal - position).angle();
        AgentState {
            id,
            position,
            heading,
            goal,
            radius,
            completed: false,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.position.distance(self.goal)
    }

    pub fn is_active(&self) -> bool {
        !self.completed
    }

    /// Surface clearance to another disc; negative on overlap.
    pub fn clearance(&self, other: &AgentState) -> f64 {
        self.position.distance(other.position) - self.radius - other.radius
    }

    fn refresh_completion(&mut self, goal_tolerance: f64) {
        if !self.completed && self.distance_to_goal() <= goal_tolerance {
            self.completed = true;
        }
    }
}

/// Planar velocity command with magnitude bounded at construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { vx: 0.0, vy: 0.0 };

    /// Builds a command, rescaling it onto the `v_max` disc if needed.
    pub fn new(v: Vec2, v_max: f64) -> Self {
        let v = v.clamp_norm(v_max);
        VelocityCommand { vx: v.x, vy: v.y }
    }

    pub fn from_components(vx: f64, vy: f64, v_max: f64) -> Self {
        Self::new(Vec2::new(vx, vy), v_max)
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn speed(self) -> f64 {
        self.as_vec().norm()
    }

    /// Same direction, speed multiplied by `factor` (expected in `[0, 1]`).
    pub fn scaled(self, factor: f64) -> Self {
        VelocityCommand {
            vx: self.vx * factor,
            vy: self.vy * factor,
        }
    }
}

/// Window and cycle durations of the coordination protocol, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub t_step: f64,
    pub t_frozen: f64,
    pub t_planning: f64,
    pub t_lookahead: f64,
    pub t_pad: f64,
    pub t_tx: f64,
    pub dt: f64,
    /// `t_frozen / t_step`.
    pub alpha: f64,
    /// Worst-case coordinator computation time, used by timing audits only.
    pub t_adj_max: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            t_step: 0.2,
            t_frozen: 0.2,
            t_planning: 0.2,
            t_lookahead: 1.5,
            t_pad: 0.1,
            t_tx: 0.05,
            dt: 0.05,
            alpha: 1.0,
            t_adj_max: 0.1,
        }
    }
}

impl TimingConfig {
    /// Sets the frozen multiplier and the frozen window with it.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self.t_frozen = alpha * self.t_step;
        self
    }

    /// Models a delivery latency of whole cycles. The padding is widened when
    /// needed so that it stays strictly above the transmission time.
    pub fn with_delay_cycles(mut self, cycles: usize) -> Self {
        self.t_tx = cycles as f64 * self.t_step;
        if self.t_pad <= self.t_tx {
            self.t_pad = self.t_tx + 0.5 * self.t_step;
        }
        self
    }

    /// Integration substeps per control step.
    pub fn substeps(&self) -> usize {
        (self.t_step / self.dt).round() as usize
    }

    /// Number of whole control cycles in `duration`.
    pub fn cycles_in(&self, duration: f64) -> usize {
        (duration / self.t_step + EPS).floor() as usize
    }

    /// Cycles covered by the frozen window (`K_f`).
    pub fn frozen_cycles(&self) -> usize {
        self.cycles_in(self.t_frozen)
    }

    pub fn planning_cycles(&self) -> usize {
        self.cycles_in(self.t_planning)
    }

    /// Whole cycles of delivery latency implied by `t_tx`. A transmission
    /// shorter than one step lands within the cycle it was sent in.
    pub fn delay_cycles(&self) -> usize {
        (self.t_tx / self.t_step + EPS).floor().max(0.0) as usize
    }

    /// Cut-off for the intent snapshot of a cycle starting at `t`.
    pub fn snapshot_cutoff(&self, t: f64) -> f64 {
        t + self.t_frozen + self.t_planning + self.t_pad
    }

    /// Checks the structural invariants of the windowed horizon.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_step", self.t_step),
            ("t_frozen", self.t_frozen),
            ("t_planning", self.t_planning),
            ("t_lookahead", self.t_lookahead),
            ("t_pad", self.t_pad),
            ("dt", self.dt),
            ("t_adj_max", self.t_adj_max),
        ];
        for (name, value) in positive {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::Parameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if self.t_tx < 0.0 {
            return Err(Error::Parameter {
                name: "t_tx",
                value: self.t_tx,
                reason: "must be non-negative",
            });
        }
        if self.alpha < 1.0 {
            return Err(Error::Parameter {
                name: "alpha",
                value: self.alpha,
                reason: "frozen multiplier must be at least 1",
            });
        }
        if (self.t_frozen - self.alpha * self.t_step).abs() > EPS {
            return Err(Error::Config(format!(
                "t_frozen = {} differs from alpha * t_step = {}",
                self.t_frozen,
                self.alpha * self.t_step
            )));
        }
        if self.t_pad <= self.t_tx {
            return Err(Error::Config(format!(
                "t_pad = {} must exceed t_tx = {}",
                self.t_pad, self.t_tx
            )));
        }
        let ratio = self.t_step / self.dt;
        if (ratio - ratio.round()).abs() > EPS || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "dt = {} does not divide t_step = {}",
                self.dt, self.t_step
            )));
        }
        for (name, value) in [("t_frozen", self.t_frozen), ("t_planning", self.t_planning)] {
            let cycles = value / self.t_step;
            if (cycles - cycles.round()).abs() > EPS {
                return Err(Error::Parameter {
                    name,
                    value,
                    reason: "must be a whole number of control cycles",
                });
            }
        }
        Ok(())
    }

    /// The dwell-time condition `t_step > 1.5 t_adj_max` (strict).
    pub fn validate_dwell(&self) -> Result<()> {
        let bound = 1.5 * self.t_adj_max;
        if self.t_step > bound {
            Ok(())
        } else {
            Err(Error::DwellTime {
                t_step: self.t_step,
                bound,
                margin: self.t_step - bound,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub v_max: f64,
    pub goal_tolerance: f64,
    pub neighbor_radius: f64,
    pub safety_margin: f64,
    pub max_time: f64,
    pub workspace: Rect,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            v_max: 1.5,
            goal_tolerance: 2.0,
            neighbor_radius: 20.0,
            safety_margin: 0.3,
            max_time: 90.0,
            workspace: Rect::centered(50.0, 50.0),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self, max_radius: f64) -> Result<()> {
        for (name, value) in [
            ("v_max", self.v_max),
            ("goal_tolerance", self.goal_tolerance),
            ("neighbor_radius", self.neighbor_radius),
            ("safety_margin", self.safety_margin),
            ("max_time", self.max_time),
        ] {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::Parameter {
                    name,
                    value,
                    reason: "must be positive",
                });
            }
        }
        if self.workspace.width() <= 0.0 || self.workspace.height() <= 0.0 {
            return Err(Error::Config("workspace rectangle is empty".into()));
        }
        if self.neighbor_radius <= 2.0 * max_radius {
            return Err(Error::Config(format!(
                "neighbor_radius {} must exceed twice the largest agent radius {}",
                self.neighbor_radius, max_radius
            )));
        }
        Ok(())
    }
}

/// Integrates one sample of duration `dt` under a constant command.
///
/// The next position is clamped to the workspace rectangle, and completion
/// latches once the agent is within `goal_tolerance` of its goal.
pub fn integrate_step(
    state: &AgentState,
    cmd: VelocityCommand,
    dt: f64,
    world: &WorldConfig,
) -> AgentState {
    let mut next = state.clone();
    let v = cmd.as_vec();
    next.position = world.workspace.clamp(state.position + v * dt);
    if v.norm_sq() > 0.0 {
        next.heading = v.angle();
    }
    next.refresh_completion(world.goal_tolerance);
    next
}

/// Straight-to-goal command at full speed; zero once completed or at goal.
pub fn nominal_command(state: &AgentState, world: &WorldConfig) -> VelocityCommand {
    if state.completed {
        return VelocityCommand::ZERO;
    }
    match (state.goal - state.position).normalized() {
        Some(dir) => VelocityCommand::new(dir * world.v_max, world.v_max),
        None => VelocityCommand::ZERO,
    }
}

fn active_pairs<'a>(
    states: &'a [AgentState],
) -> impl Iterator<Item = (&'a AgentState, &'a AgentState)> + 'a {
    states.iter().enumerate().flat_map(move |(i, a)| {
        states[i + 1..]
            .iter()
            .filter(move |b| a.is_active() && b.is_active())
            .map(move |b| (a, b))
    })
}

/// Minimum surface clearance over pairs of active agents, `+inf` with fewer
/// than two.
pub fn min_pairwise_distance(states: &[AgentState]) -> f64 {
    active_pairs(states)
        .map(|(a, b)| a.clearance(b))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum center-to-center distance over pairs of active agents.
pub fn min_center_distance(states: &[AgentState]) -> f64 {
    active_pairs(states)
        .map(|(a, b)| a.position.distance(b.position))
        .fold(f64::INFINITY, f64::min)
}

/// True iff some pair of active agents has surface clearance below `margin`.
pub fn detect_collision(states: &[AgentState], margin: f64) -> bool {
    active_pairs(states).any(|(a, b)| a.clearance(b) < margin)
}
