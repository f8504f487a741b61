//! One coordinator instance and its cycle: snapshot, detect, preempt, commit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::conflict::{
    detect_conflicts, directives, settle_speeds, AdjustmentDirective, ExternalTrack, Windows,
    DEFAULT_FACTORS,
};
use super::plan::{snapshot_intents, FrozenPlan, IntentBuffer};
use crate::world::{AgentState, TimingConfig, VelocityCommand, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProllectConfig {
    /// Clearance below which a predicted approach counts as a conflict.
    pub margin: f64,
    /// Speed factors for the yielding agent, largest first.
    pub factors: Vec<f64>,
    /// With preemption off the coordinator only buffers intents.
    pub preemption: bool,
}

impl Default for ProllectConfig {
    fn default() -> Self {
        ProllectConfig {
            margin: 0.3,
            factors: DEFAULT_FACTORS.to_vec(),
            preemption: true,
        }
    }
}

/// What happened in one coordinator cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub conflicts: usize,
    pub preempt_triggered: bool,
    pub directives: Vec<AdjustmentDirective>,
}

/// Committed plans of one subspace.
#[derive(Clone, Debug)]
pub struct Coordinator {
    pub timing: TimingConfig,
    pub cfg: ProllectConfig,
    plans: BTreeMap<usize, FrozenPlan>,
    right_of_way: RightOfWay,
    log: Vec<CycleRecord>,
}

/// Agents promoted in earlier cycles with the cycle their precedence lapses,
/// oldest grant first. Without it two agents can hand the right of way back
/// and forth every cycle and neither ever moves.
pub type RightOfWay = Vec<(usize, u64)>;

impl Coordinator {
    pub fn new(timing: TimingConfig, cfg: ProllectConfig) -> Self {
        Coordinator {
            timing,
            cfg,
            plans: BTreeMap::new(),
            right_of_way: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn plans(&self) -> &BTreeMap<usize, FrozenPlan> {
        &self.plans
    }

    pub fn log(&self) -> &[CycleRecord] {
        &self.log
    }

    /// Takes over an agent with its existing plan (ownership handover).
    pub fn adopt(&mut self, plan: FrozenPlan) {
        self.plans.insert(plan.agent_id, plan);
    }

    /// Hands an agent's plan to another coordinator.
    pub fn release(&mut self, agent_id: usize) -> Option<FrozenPlan> {
        self.plans.remove(&agent_id)
    }

    /// Runs the cycle starting at slot `cycle` for the agents in `states`.
    /// `external` holds shadow tubes of agents owned elsewhere.
    pub fn cycle(
        &mut self,
        cycle: u64,
        states: &[AgentState],
        intents: &IntentBuffer,
        external: &[ExternalTrack],
        world: &WorldConfig,
    ) -> &CycleRecord {
        let record = coordinator_cycle(
            &mut self.plans,
            &mut self.right_of_way,
            cycle,
            states,
            intents,
            external,
            &self.timing,
            &self.cfg,
            world,
        );
        self.log.push(record);
        self.log.last().expect("just pushed")
    }
}

/// Snapshot, detect, preempt and commit for the cycle starting at slot
/// `cycle`. Plans are shifted to start at `cycle`, slots before the planning
/// window are left untouched, and the detection slot is appended.
#[allow(clippy::too_many_arguments)]
pub fn coordinator_cycle(
    plans: &mut BTreeMap<usize, FrozenPlan>,
    right_of_way: &mut RightOfWay,
    cycle: u64,
    states: &[AgentState],
    intents: &IntentBuffer,
    external: &[ExternalTrack],
    timing: &TimingConfig,
    cfg: &ProllectConfig,
    world: &WorldConfig,
) -> CycleRecord {
    let active: Vec<AgentState> = states.iter().filter(|s| s.is_active()).cloned().collect();
    plans.retain(|id, _| active.iter().any(|s| s.id == *id));
    right_of_way.retain(|&(id, until)| until > cycle && active.iter().any(|s| s.id == id));

    let t = cycle as f64 * timing.t_step;
    let snapshot = snapshot_intents(intents.records(), timing.snapshot_cutoff(t), &active, world);
    let win = Windows::at(cycle, timing);

    for s in &active {
        let intent = snapshot[&s.id];
        let plan = plans
            .entry(s.id)
            .or_insert_with(|| FrozenPlan::hold(s.id, cycle, intent, 0));
        plan.shift_to(cycle);
        if plan.first_cycle < cycle || plan.commands.is_empty() {
            *plan = FrozenPlan::hold(s.id, cycle, intent, 0);
        }
        // A fresh plan (or one that ran dry) is filled with the intent.
        if plan.end_cycle() < win.detection {
            let from = plan.end_cycle();
            for k in from..win.detection {
                plan.set(k, intent);
            }
        }
    }

    let (conflicts, settlements) = if cfg.preemption {
        let conflicts = detect_conflicts(
            &active, &snapshot, plans, external, timing, cfg.margin, cycle,
        );
        let settlements = if conflicts.is_empty() {
            Vec::new()
        } else {
            settle_speeds(
                &active,
                &snapshot,
                plans,
                external,
                timing,
                cfg.margin,
                &cfg.factors,
                &right_of_way.iter().map(|&(id, _)| id).collect::<Vec<_>>(),
                cycle,
            )
        };
        (conflicts, settlements)
    } else {
        (Vec::new(), Vec::new())
    };

    // Precedence lasts until the agent's current commitments have played out.
    let until = win.detection + (timing.t_lookahead / timing.t_step).ceil() as u64;
    for st in settlements.iter().filter(|st| st.promoted) {
        match right_of_way.iter_mut().find(|(id, _)| *id == st.agent_id) {
            Some(entry) => entry.1 = until,
            None => right_of_way.push((st.agent_id, until)),
        }
    }

    for s in &active {
        let intent = snapshot[&s.id];
        let plan = plans.get_mut(&s.id).expect("plan initialized above");
        let settlement = settlements.iter().find(|d| d.agent_id == s.id);
        match settlement.and_then(|d| d.factor) {
            Some(f) => {
                for k in win.adjustment() {
                    plan.set(k, intent.scaled(f));
                }
            }
            // A promoted agent gets its intent back at once.
            None if settlement.is_some_and(|d| d.promoted) => {
                for k in win.adjustment() {
                    plan.set(k, intent);
                }
            }
            None => plan.set(win.detection, intent),
        }
    }
    let directives = directives(&settlements);

    CycleRecord {
        cycle,
        conflicts: conflicts.len(),
        preempt_triggered: settlements.iter().any(|s| s.triggered),
        directives,
    }
}

/// Fraction of cycles in which a preemptive adjustment was issued.
pub fn preemption_rate(log: &[CycleRecord]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().filter(|r| r.preempt_triggered).count() as f64 / log.len() as f64
}

/// Cycle log as CSV: `cycle,conflicts,preempt,directives` where directives
/// are `id:factor` items separated by `;`.
pub fn cycle_log_csv(log: &[CycleRecord]) -> String {
    let mut out = String::from("cycle,conflicts,preempt,directives\n");
    for r in log {
        let dirs: Vec<String> = r
            .directives
            .iter()
            .map(|d| format!("{}:{:.9}", d.agent_id, d.speed_factor))
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.cycle,
            r.conflicts,
            r.preempt_triggered as u8,
            dirs.join(";")
        );
    }
    out
}

/// The command of `plan` for slot `cycle`, or zero when uncovered.
pub fn planned_command(plan: Option<&FrozenPlan>, cycle: u64) -> VelocityCommand {
    plan.and_then(|p| p.command_at(cycle))
        .unwrap_or(VelocityCommand::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::world::nominal_command;

    fn agent(id: usize, x: f64, y: f64, gx: f64, gy: f64) -> AgentState {
        AgentState::new(id, Vec2::new(x, y), Vec2::new(gx, gy), 0.5)
    }

    struct Fixture {
        plans: BTreeMap<usize, FrozenPlan>,
        right_of_way: RightOfWay,
        intents: IntentBuffer,
        timing: TimingConfig,
        world: WorldConfig,
    }

    impl Fixture {
        fn new() -> Self {
            Fixture {
                plans: BTreeMap::new(),
                right_of_way: Vec::new(),
                intents: IntentBuffer::new(),
                timing: TimingConfig::default(),
                world: WorldConfig::default(),
            }
        }

        fn run(&mut self, cycle: u64, states: &[AgentState]) -> CycleRecord {
            coordinator_cycle(
                &mut self.plans,
                &mut self.right_of_way,
                cycle,
                states,
                &self.intents,
                &[],
                &self.timing,
                &ProllectConfig::default(),
                &self.world,
            )
        }

        fn slots(&self, id: usize) -> Vec<(u64, VelocityCommand)> {
            let p = &self.plans[&id];
            (p.first_cycle..p.end_cycle())
                .map(|k| (k, p.command_at(k).unwrap()))
                .collect()
        }
    }

    #[test]
    fn conflict_free_cycle_shifts_and_appends() {
        let mut fx = Fixture::new();
        let states = [agent(0, 0.0, 0.0, 20.0, 0.0), agent(1, 0.0, 5.0, 20.0, 5.0)];
        let v = nominal_command(&states[0], &fx.world);
        let r0 = fx.run(0, &states);
        assert!(!r0.preempt_triggered && r0.conflicts == 0 && r0.directives.is_empty());
        assert_eq!(fx.slots(0), vec![(0, v), (1, v), (2, v)]);
        let before = fx.slots(1);
        let r1 = fx.run(1, &states);
        assert!(!r1.preempt_triggered);
        assert_eq!(fx.slots(1)[..2], before[1..]);
        assert_eq!(fx.slots(1), vec![(1, v), (2, v), (3, v)]);
    }

    #[test]
    fn crossing_slows_only_the_directed_agent() {
        let mut fx = Fixture::new();
        let states = [
            agent(0, -2.4, 0.0, 20.0, 0.0),
            agent(1, 0.0, -2.4, 0.0, 20.0),
        ];
        let v0 = nominal_command(&states[0], &fx.world);
        let v1 = nominal_command(&states[1], &fx.world);
        let r = fx.run(0, &states);
        assert!(r.preempt_triggered);
        assert_eq!(r.conflicts, 1);
        assert_eq!(r.directives.len(), 1);
        let d = r.directives[0];
        assert_eq!(d.agent_id, 1);
        assert_eq!(fx.slots(0), vec![(0, v0), (1, v0), (2, v0)]);
        // The frozen slot keeps the intent; the adjustment interval is scaled.
        let slow = v1.scaled(d.speed_factor);
        assert_eq!(fx.slots(1), vec![(0, v1), (1, slow), (2, slow)]);
    }

    #[test]
    fn frozen_slots_are_never_rewritten() {
        let mut fx = Fixture::new();
        let mut states = vec![
            agent(0, -2.4, 0.0, 20.0, 0.0),
            agent(1, 0.0, -2.4, 0.0, 20.0),
            agent(2, 2.0, 2.0, -20.0, -20.0),
        ];
        let mut prev: Option<BTreeMap<usize, FrozenPlan>> = None;
        for cycle in 0..15 {
            fx.run(cycle, &states);
            if let Some(prev) = &prev {
                for (id, plan) in &fx.plans {
                    assert_eq!(plan.command_at(cycle), prev[id].command_at(cycle));
                }
            }
            for s in states.iter_mut() {
                let c = fx.plans[&s.id].command_at(cycle).unwrap();
                s.position += c.as_vec() * fx.timing.t_step;
            }
            prev = Some(fx.plans.clone());
        }
    }

    #[test]
    fn late_intent_waits_for_the_next_cycle() {
        let mut fx = Fixture::new();
        let states = [agent(0, 0.0, 0.0, 20.0, 0.0)];
        let v = nominal_command(&states[0], &fx.world);
        // Cut-off of cycle 0 is 0.5 s, of cycle 1 is 0.7 s.
        fx.intents.submit(0, v, 0.0);
        fx.intents.submit(0, VelocityCommand::ZERO, 0.6);
        fx.run(0, &states);
        assert_eq!(fx.plans[&0].command_at(2), Some(v));
        fx.run(1, &states);
        assert_eq!(fx.plans[&0].command_at(2), Some(v));
        assert_eq!(fx.plans[&0].command_at(3), Some(VelocityCommand::ZERO));
    }

    #[test]
    fn preemption_rate_examples() {
        let rec = |preempt_triggered| CycleRecord {
            cycle: 0,
            conflicts: 0,
            preempt_triggered,
            directives: Vec::new(),
        };
        assert_eq!(preemption_rate(&[]), 0.0);
        assert_eq!(preemption_rate(&[rec(false), rec(false)]), 0.0);
        assert_eq!(preemption_rate(&[rec(true), rec(true)]), 1.0);
        assert_eq!(
            preemption_rate(&[rec(true), rec(false), rec(false), rec(false)]),
            0.25
        );
    }

    #[test]
    fn log_csv_lists_directives() {
        let log = [CycleRecord {
            cycle: 4,
            conflicts: 2,
            preempt_triggered: true,
            directives: vec![
                AdjustmentDirective {
                    agent_id: 3,
                    speed_factor: 0.5,
                    unresolved: false,
                },
                AdjustmentDirective {
                    agent_id: 7,
                    speed_factor: 0.0,
                    unresolved: false,
                },
            ],
        }];
        assert_eq!(
            cycle_log_csv(&log),
            "cycle,conflicts,preempt,directives\n4,2,1,3:0.500000000;7:0.000000000\n"
        );
    }
}
