//! Conflict prediction on the detection slot and speed-factor preemption.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::FrozenPlan;
use crate::geometry::Vec2;
use crate::hierarchy::SpatioTemporalTube;
use crate::world::{AgentState, TimingConfig, VelocityCommand};

/// Speed factors tried by the lower-priority agent, largest first.
pub const DEFAULT_FACTORS: [f64; 4] = [0.75, 0.5, 0.25, 0.0];

/// Distance decrease (m) per sample below which a pair counts as holding
/// its distance rather than closing in.
const CLOSING_EPS: f64 = 1e-9;

/// Slot layout of one coordinator cycle, in cycle indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Windows {
    pub cycle: u64,
    /// First slot the coordinator may still change.
    pub planning_start: u64,
    /// The slot scanned for conflicts (last slot of the adjustment interval).
    pub detection: u64,
}

impl Windows {
    /// Frozen slots are `cycle .. cycle + K_f + d`; planning slots follow,
    /// then the detection slot.
    pub fn at(cycle: u64, timing: &TimingConfig) -> Self {
        let planning_start = cycle + (timing.frozen_cycles() + timing.delay_cycles()) as u64;
        Windows {
            cycle,
            planning_start,
            detection: planning_start + timing.planning_cycles() as u64,
        }
    }

    pub fn adjustment(&self) -> std::ops::RangeInclusive<u64> {
        self.planning_start..=self.detection
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub pair: (usize, usize),
    /// First sampled time in the detection interval with a breach.
    pub breach_time: f64,
    /// Smallest predicted surface clearance over the detection interval.
    pub predicted_clearance: f64,
    /// The second member is an external (shadow) track.
    pub external: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentDirective {
    pub agent_id: usize,
    pub speed_factor: f64,
    /// Even a full stop leaves a predicted conflict; the safety layer must
    /// handle it.
    pub unresolved: bool,
}

/// One agent's predicted motion, with `tau` measured from the start of the
/// detection slot.
#[derive(Clone, Copy, Debug)]
struct Track {
    id: usize,
    radius: f64,
    /// Position now, `lead` seconds before the detection slot.
    origin: Vec2,
    lead: f64,
    /// Position at the start of the detection slot.
    entry: Vec2,
    velocity: Vec2,
}

impl Track {
    fn at(&self, tau: f64) -> Vec2 {
        if tau < 0.0 && self.lead > 0.0 {
            let k = ((tau + self.lead) / self.lead).max(0.0);
            return self.origin + (self.entry - self.origin) * k;
        }
        self.entry + self.velocity * tau
    }
}

fn predict(
    state: &AgentState,
    intent: VelocityCommand,
    plan: Option<&FrozenPlan>,
    win: &Windows,
    timing: &TimingConfig,
    factor: Option<f64>,
) -> Track {
    let t_step = timing.t_step;
    let frozen_end = win.planning_start;
    let mut p = match plan {
        Some(plan) => plan.advance(state.position, win.cycle, frozen_end, t_step),
        None => state.position + intent.as_vec() * ((frozen_end - win.cycle) as f64 * t_step),
    };
    for k in win.planning_start..win.detection {
        let v = match (factor, plan.and_then(|pl| pl.command_at(k))) {
            (Some(f), _) => intent.as_vec() * f,
            (None, Some(c)) => c.as_vec(),
            (None, None) => intent.as_vec(),
        };
        p += v * t_step;
    }
    Track {
        id: state.id,
        radius: state.radius,
        origin: state.position,
        lead: (win.detection - win.cycle) as f64 * t_step,
        entry: p,
        velocity: intent.as_vec() * factor.unwrap_or(1.0),
    }
}

/// Samples scanned after the start of the detection slot: the look-ahead
/// window at `dt` spacing, at least one slot.
fn scan_samples(timing: &TimingConfig) -> usize {
    ((timing.t_lookahead.max(timing.t_step) / timing.dt).round() as usize).max(1)
}

/// Earliest breach and smallest clearance of two tracks over `samples`
/// points `dt` apart, the first one `dt` after `from` (relative to the
/// detection slot).
#[allow(clippy::too_many_arguments)]
fn scan_pair(
    a_at: impl Fn(f64) -> Vec2,
    b_at: impl Fn(f64) -> Option<Vec2>,
    combined: f64,
    margin: f64,
    slot_start: f64,
    timing: &TimingConfig,
    from: f64,
    samples: usize,
) -> Option<(f64, f64)> {
    let mut first = None;
    let mut min_clear = f64::INFINITY;
    let mut prev = b_at(from).map(|b| a_at(from).distance(b));
    for m in 1..=samples {
        let tau = from + m as f64 * timing.dt;
        let Some(b) = b_at(tau) else {
            prev = None;
            continue;
        };
        let d = a_at(tau).distance(b);
        min_clear = min_clear.min(d - combined);
        // Pairs already inside the band but separating are left alone.
        let closing = prev.is_none_or(|p| d < p - CLOSING_EPS);
        if d < combined + margin && closing && first.is_none() {
            first = Some(slot_start + tau);
        }
        prev = Some(d);
    }
    first.map(|t| (t, min_clear))
}

/// A track owned by another coordinator. Local agents yield to it only
/// when its agent is nearer its goal (ties to the lower id), the same rule
/// that orders agents inside one coordinator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalTrack {
    pub tube: SpatioTemporalTube,
    pub distance_to_goal: f64,
}

impl ExternalTrack {
    fn outranks(&self, me: &AgentState) -> bool {
        let (d, id) = priority_key(me);
        self.distance_to_goal
            .total_cmp(&d)
            .then(self.tube.agent_id.cmp(&id))
            .is_lt()
    }
}

fn external_at<'a>(
    tube: &'a SpatioTemporalTube,
    slot_start: f64,
) -> impl Fn(f64) -> Option<Vec2> + 'a {
    move |tau| tube.center_at(slot_start + tau)
}

/// Pairs whose predicted center distance drops below `r_i + r_j + margin`
/// during the detection slot. Agents follow their committed plan up to that
/// slot and their intent inside it. Sorted by breach time, then ids.
pub fn detect_conflicts(
    states: &[AgentState],
    intents: &BTreeMap<usize, VelocityCommand>,
    plans: &BTreeMap<usize, FrozenPlan>,
    external: &[ExternalTrack],
    timing: &TimingConfig,
    margin: f64,
    cycle: u64,
) -> Vec<ConflictRecord> {
    let win = Windows::at(cycle, timing);
    let slot_start = win.detection as f64 * timing.t_step;
    let tracks: Vec<Track> = active_sorted(states)
        .map(|s| {
            let intent = intents.get(&s.id).copied().unwrap_or(VelocityCommand::ZERO);
            predict(s, intent, plans.get(&s.id), &win, timing, None)
        })
        .collect();

    let mut out = Vec::new();
    for (i, a) in tracks.iter().enumerate() {
        for b in &tracks[i + 1..] {
            if let Some((t, c)) = scan_pair(
                |tau| a.at(tau),
                |tau| Some(b.at(tau)),
                a.radius + b.radius,
                margin,
                slot_start,
                timing,
                0.0,
                scan_samples(timing),
            ) {
                out.push(ConflictRecord {
                    pair: (a.id, b.id),
                    breach_time: t,
                    predicted_clearance: c,
                    external: false,
                });
            }
        }
        for tube in external.iter().map(|e| &e.tube) {
            if let Some((t, c)) = scan_pair(
                |tau| a.at(tau),
                external_at(tube, slot_start),
                a.radius + tube.inflated_radius(),
                margin,
                slot_start,
                timing,
                0.0,
                scan_samples(timing),
            ) {
                out.push(ConflictRecord {
                    pair: (a.id, tube.agent_id),
                    breach_time: t,
                    predicted_clearance: c,
                    external: true,
                });
            }
        }
    }
    out.sort_by(|x, y| {
        x.breach_time
            .total_cmp(&y.breach_time)
            .then(x.pair.cmp(&y.pair))
    });
    out
}

fn active_sorted(states: &[AgentState]) -> impl Iterator<Item = &AgentState> {
    let mut v: Vec<&AgentState> = states.iter().filter(|s| s.is_active()).collect();
    v.sort_by_key(|s| s.id);
    v.into_iter()
}

/// Ranks agents for right of way: nearer to goal first, then lower id.
fn priority_key(s: &AgentState) -> (f64, usize) {
    (s.distance_to_goal(), s.id)
}

/// The agent of the pair that yields: the one farther from its goal, ties
/// to the higher id.
pub fn yielding_agent(a: &AgentState, b: &AgentState) -> usize {
    let (ka, kb) = (priority_key(a), priority_key(b));
    if ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).is_gt() {
        a.id
    } else {
        b.id
    }
}

/// How one agent's adjustment interval is set this cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Settlement {
    pub agent_id: usize,
    /// Speed factor over the adjustment interval; `None` follows the plan
    /// and appends the intent.
    pub factor: Option<f64>,
    /// A new slowdown, as opposed to keeping an earlier one.
    pub triggered: bool,
    pub unresolved: bool,
    /// Moved ahead of the distance order because it could not yield.
    pub promoted: bool,
}

/// The factor an agent's committed plan already applies at the end of the
/// previous cycle's adjustment interval, if below 1.
fn held_factor(plan: Option<&FrozenPlan>, intent: VelocityCommand, win: &Windows) -> Option<f64> {
    let speed = intent.as_vec().norm();
    if speed <= 0.0 || win.detection == 0 {
        return None;
    }
    let last = plan?.command_at(win.detection - 1)?.as_vec().norm();
    let f = (last / speed).clamp(0.0, 1.0);
    (f < 1.0 - 1e-9).then_some(f)
}

/// Slows yielding agents so that their predicted tracks clear everyone with
/// right of way over them, resuming their intent once that is clear.
/// Agents are settled in priority order, each against the already settled
/// tracks of higher-priority agents and the external tracks, scanned from
/// now to the end of the look-ahead window. The first of
/// these that clears is taken: the intent, the slowdown already in the plan,
/// then the largest factor from `factors`. Only the last counts as a new
/// adjustment. An agent that cannot clear even by stopping is committed: it
/// moves ahead of everyone still free to yield and the pass is rerun. Agents
/// in `precedence` start there, in that order. Whoever is still stuck after
/// that keeps its intent and is flagged for the safety layer.
#[allow(clippy::too_many_arguments)]
pub fn settle_speeds(
    states: &[AgentState],
    intents: &BTreeMap<usize, VelocityCommand>,
    plans: &BTreeMap<usize, FrozenPlan>,
    external: &[ExternalTrack],
    timing: &TimingConfig,
    margin: f64,
    factors: &[f64],
    precedence: &[usize],
    cycle: u64,
) -> Vec<Settlement> {
    let win = Windows::at(cycle, timing);
    let slot_start = win.detection as f64 * timing.t_step;
    // From now, so that a yielder never waits on the stretch a right-of-way
    // agent still has to cover before the detection slot.
    let lead = (win.detection - cycle) as f64 * timing.t_step;
    let samples = scan_samples(timing) + (lead / timing.dt).round() as usize;
    let span = samples as f64 * timing.dt;
    let intent_of = |id: usize| intents.get(&id).copied().unwrap_or(VelocityCommand::ZERO);

    let mut order: Vec<&AgentState> = states.iter().filter(|s| s.is_active()).collect();
    order.sort_by(|a, b| {
        let (ka, kb) = (priority_key(a), priority_key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });
    let v_max = order
        .iter()
        .map(|s| intent_of(s.id).as_vec().norm())
        .fold(0.0_f64, f64::max);

    let pass = |order: &[&AgentState]| {
        let mut settled: Vec<Track> = Vec::with_capacity(order.len());
        let mut out = Vec::with_capacity(order.len());
        for &me in order {
            let plan = plans.get(&me.id);
            let track = |f: Option<f64>| predict(me, intent_of(me.id), plan, &win, timing, f);
            let base = track(None);
            // Tracks that start too far apart cannot meet within the scan.
            let rivals: Vec<&Track> = settled
                .iter()
                .filter(|o| {
                    base.entry.distance(o.entry)
                        <= 2.0 * v_max * span + base.radius + o.radius + margin
                })
                .collect();
            let clear = |tr: &Track| {
                rivals.iter().all(|o| {
                    scan_pair(
                        |tau| tr.at(tau),
                        |tau| Some(o.at(tau)),
                        tr.radius + o.radius,
                        margin,
                        slot_start,
                        timing,
                        -lead,
                        samples,
                    )
                    .is_none()
                }) && external.iter().filter(|e| e.outranks(me)).all(|e| {
                    let tube = &e.tube;
                    scan_pair(
                        |tau| tr.at(tau),
                        external_at(tube, slot_start),
                        tr.radius + tube.inflated_radius(),
                        margin,
                        slot_start,
                        timing,
                        -lead,
                        samples,
                    )
                    .is_none()
                })
            };
            let settle = |factor, triggered, unresolved| Settlement {
                agent_id: me.id,
                factor,
                triggered,
                unresolved,
                promoted: false,
            };
            let (settlement, tr) = if clear(&base) {
                (settle(None, false, false), base)
            } else if let Some((f, tr)) = held_factor(plan, intent_of(me.id), &win)
                .map(|f| (f, track(Some(f))))
                .filter(|(_, tr)| clear(tr))
            {
                (settle(Some(f), false, false), tr)
            } else {
                match factors
                    .iter()
                    .map(|&f| (f, track(Some(f))))
                    .find(|(_, tr)| clear(tr))
                {
                    Some((f, tr)) => (settle(Some(f), true, false), tr),
                    None => (settle(None, false, true), base),
                }
            };
            settled.push(tr);
            out.push(settlement);
        }
        out
    };

    let mut promoted: Vec<usize> = precedence
        .iter()
        .copied()
        .filter(|id| order.iter().any(|s| s.id == *id))
        .collect();
    let mut out;
    loop {
        let (mut head, rest): (Vec<&AgentState>, Vec<&AgentState>) =
            order.iter().partition(|s| promoted.contains(&s.id));
        head.sort_by_key(|s| promoted.iter().position(|&id| id == s.id));
        head.extend(rest);
        out = pass(&head);
        let stuck: Vec<usize> = out
            .iter()
            .filter(|s| s.unresolved && !promoted.contains(&s.agent_id))
            .map(|s| s.agent_id)
            .collect();
        if stuck.is_empty() {
            break;
        }
        promoted.extend(stuck);
    }
    for s in &mut out {
        s.promoted = promoted.contains(&s.agent_id);
    }
    out.sort_by_key(|s| s.agent_id);
    out
}

/// New slowdowns for this cycle, plus the agents flagged unresolved (at
/// factor 1), sorted by id. Empty when there are no conflicts.
#[allow(clippy::too_many_arguments)]
pub fn preempt_adjust(
    conflicts: &[ConflictRecord],
    states: &[AgentState],
    intents: &BTreeMap<usize, VelocityCommand>,
    plans: &BTreeMap<usize, FrozenPlan>,
    external: &[ExternalTrack],
    timing: &TimingConfig,
    margin: f64,
    factors: &[f64],
    cycle: u64,
) -> Vec<AdjustmentDirective> {
    if conflicts.is_empty() {
        return Vec::new();
    }
    directives(&settle_speeds(
        states,
        intents,
        plans,
        external,
        timing,
        margin,
        factors,
        &[],
        cycle,
    ))
}

/// The settlements worth reporting: new slowdowns and unresolved agents.
pub fn directives(settlements: &[Settlement]) -> Vec<AdjustmentDirective> {
    settlements
        .iter()
        .filter(|s| s.triggered || s.unresolved)
        .map(|s| AdjustmentDirective {
            agent_id: s.agent_id,
            speed_factor: s.factor.unwrap_or(1.0),
            unresolved: s.unresolved,
        })
        .collect()
}
