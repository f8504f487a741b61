//! Deterministic scenario layouts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comms::{stream_rng, SCENARIO_STREAM};
use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2};
use crate::world::AgentState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Intersection,
    Bottleneck,
    Random,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Intersection,
        ScenarioKind::Bottleneck,
        ScenarioKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Intersection => "intersection",
            ScenarioKind::Bottleneck => "bottleneck",
            ScenarioKind::Random => "random",
        }
    }

    /// Agent count used by the comparison suite.
    pub fn default_agents(self) -> usize {
        match self {
            ScenarioKind::Bottleneck => 16,
            _ => 20,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown scenario `{s}` (expected intersection, bottleneck or random)")
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub radius: f64,
    /// Distance between consecutive agents queued on an arm, metres.
    pub arm_spacing: f64,
    /// Distance from the centre to the first agent of each arm.
    pub arm_start: f64,
    /// Lateral offset of each travel lane from the arm's centre line. The
    /// default puts the two lanes of a 3 m corridor at its quarter lines.
    pub lane_offset: f64,
    pub passage_width: f64,
    pub passage_length: f64,
    /// Distance from a passage mouth to the nearest start.
    pub bay_depth: f64,
    /// Half-height of the region where bay starts are spread.
    pub bay_spread: f64,
    /// Spacing between consecutive starts in a bay, along the flow.
    pub bay_spacing: f64,
    /// Side of the random-waypoint square.
    pub random_side: f64,
    /// Required surface clearance between starts.
    pub start_clearance: f64,
    pub min_travel: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            radius: 0.5,
            arm_spacing: 3.0,
            arm_start: 15.0,
            lane_offset: 0.75,
            passage_width: 3.0,
            passage_length: 10.0,
            bay_depth: 25.0,
            bay_spread: 6.0,
            bay_spacing: 2.5,
            random_side: 40.0,
            start_clearance: 0.5,
            min_travel: 10.0,
            max_attempts: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_agents: usize,
    pub seed: u64,
    pub params: ScenarioParams,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n_agents: usize, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            n_agents,
            seed,
            params: ScenarioParams::default(),
        }
    }
}

/// Initial agents plus the workspace that contains them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub agents: Vec<AgentState>,
    pub workspace: Rect,
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.n_agents == 0 {
        return Err(Error::Scenario("at least one agent is required".into()));
    }
    let (agents, workspace) = match spec.kind {
        ScenarioKind::Intersection => intersection(spec)?,
        ScenarioKind::Bottleneck => bottleneck(spec)?,
        ScenarioKind::Random => random(spec)?,
    };
    check_invariants(&agents, &workspace, &spec.params)?;
    Ok(Scenario {
        spec: spec.clone(),
        agents,
        workspace,
    })
}

fn check_invariants(agents: &[AgentState], workspace: &Rect, p: &ScenarioParams) -> Result<()> {
    for (i, a) in agents.iter().enumerate() {
        if !workspace.contains(a.position) || !workspace.contains(a.goal) {
            return Err(Error::Scenario(format!(
                "agent {} leaves the workspace",
                a.id
            )));
        }
        if a.distance_to_goal() < p.min_travel {
            return Err(Error::Scenario(format!(
                "agent {} starts too close to its goal",
                a.id
            )));
        }
        for b in &agents[i + 1..] {
            if a.clearance(b) < p.start_clearance - 1e-9 {
                return Err(Error::Scenario(format!(
                    "starts of agents {} and {} overlap",
                    a.id, b.id
                )));
            }
        }
    }
    Ok(())
}

/// Four arms of queued agents on offset lanes. Arm `k` is arm 0 rotated by
/// `k` quarter turns. Every agent drives straight along its lane across the
/// centre to the mirror image of its start on the far arm, so the goal set
/// is the start set mirrored across either corridor axis.
fn intersection(spec: &ScenarioSpec) -> Result<(Vec<AgentState>, Rect)> {
    let p = &spec.params;
    if !spec.n_agents.is_multiple_of(4) {
        return Err(Error::Scenario(format!(
            "intersection needs a multiple of 4 agents, got {}",
            spec.n_agents
        )));
    }
    let per_arm = spec.n_agents / 4;
    let rotate = |v: Vec2, k: usize| -> Vec2 { (0..k).fold(v, |v, _| Vec2::new(-v.y, v.x)) };
    let mut agents = Vec::with_capacity(spec.n_agents);
    for arm in 0..4 {
        for i in 0..per_arm {
            let start = Vec2::new(p.arm_start + p.arm_spacing * i as f64, p.lane_offset);
            let goal = Vec2::new(-start.x, start.y);
            agents.push(AgentState::new(
                arm * per_arm + i,
                rotate(start, arm),
                rotate(goal, arm),
                p.radius,
            ));
        }
    }
    let half = p.arm_start + p.arm_spacing * per_arm as f64 + 5.0;
    Ok((agents, Rect::centered(half, half)))
}

/// Two groups flow in opposite directions through a passage at the origin.
/// Every straight path crosses the passage mouth line `x = 0` inside the
/// passage width, so all traffic funnels through it.
fn bottleneck(spec: &ScenarioSpec) -> Result<(Vec<AgentState>, Rect)> {
    let p = &spec.params;
    if !spec.n_agents.is_multiple_of(2) {
        return Err(Error::Scenario(format!(
            "bottleneck needs an even number of agents, got {}",
            spec.n_agents
        )));
    }
    let half = spec.n_agents / 2;
    let mut rng = stream_rng(spec.seed, SCENARIO_STREAM);
    let mouth = p.passage_length / 2.0 + p.bay_depth;
    let lane = (p.passage_width / 2.0 - p.radius).max(0.0);
    let mut agents = Vec::with_capacity(spec.n_agents);
    for side in 0..2 {
        let dir = if side == 0 { 1.0 } else { -1.0 };
        for k in 0..half {
            let sx = mouth + p.bay_spacing * k as f64;
            let gx = mouth + p.bay_spacing * (half - 1 - k) as f64;
            let ys: f64 = rng.gen_range(-p.bay_spread..=p.bay_spread);
            let yc: f64 = rng.gen_range(-lane..=lane);
            // Straight line from (-sx, ys) through (0, yc), extended to x = gx.
            let yg = yc + (yc - ys) * gx / sx;
            agents.push(AgentState::new(
                side * half + k,
                Vec2::new(-dir * sx, ys),
                Vec2::new(dir * gx, yg),
                p.radius,
            ));
        }
    }
    let reach = mouth + p.bay_spacing * half as f64 + 5.0;
    let spread = agents
        .iter()
        .flat_map(|a| [a.position.y.abs(), a.goal.y.abs()])
        .fold(p.bay_spread, f64::max)
        + 5.0;
    Ok((agents, Rect::centered(reach, spread)))
}

/// Rejection-sampled starts and goals in a square.
fn random(spec: &ScenarioSpec) -> Result<(Vec<AgentState>, Rect)> {
    let p = &spec.params;
    let half = p.random_side / 2.0;
    let inner = half - p.radius;
    let mut rng = stream_rng(spec.seed, SCENARIO_STREAM);
    let apart = 2.0 * p.radius + p.start_clearance;
    let mut starts: Vec<Vec2> = Vec::with_capacity(spec.n_agents);
    let mut goals: Vec<Vec2> = Vec::with_capacity(spec.n_agents);
    let mut attempts = 0;
    while starts.len() < spec.n_agents {
        attempts += 1;
        if attempts > p.max_attempts {
            return Err(Error::Scenario(format!(
                "could not place {} agents in a {} m square after {} attempts",
                spec.n_agents, p.random_side, p.max_attempts
            )));
        }
        let s = Vec2::new(rng.gen_range(-inner..=inner), rng.gen_range(-inner..=inner));
        let g = Vec2::new(rng.gen_range(-inner..=inner), rng.gen_range(-inner..=inner));
        if s.distance(g) < p.min_travel
            || starts.iter().any(|o| o.distance(s) < apart)
            || goals.iter().any(|o| o.distance(g) < apart)
        {
            continue;
        }
        starts.push(s);
        goals.push(g);
    }
    let agents = starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(id, (s, g))| AgentState::new(id, s, g, p.radius))
        .collect();
    Ok((agents, Rect::centered(half, half)))
}
