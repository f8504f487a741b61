//! Committed per-slot velocity schedules and the intent buffer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::world::{nominal_command, AgentState, VelocityCommand, WorldConfig};

/// Per-agent schedule of one command per control slot, starting at
/// `first_cycle`. Slot `k` spans `[k t_step, (k + 1) t_step)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenPlan {
    pub agent_id: usize,
    pub first_cycle: u64,
    pub commands: Vec<VelocityCommand>,
}

impl FrozenPlan {
    /// A plan holding `cmd` over `len` slots starting at `first_cycle`.
    pub fn hold(agent_id: usize, first_cycle: u64, cmd: VelocityCommand, len: usize) -> Self {
        FrozenPlan {
            agent_id,
            first_cycle,
            commands: vec![cmd; len],
        }
    }

    /// One past the last covered slot.
    pub fn end_cycle(&self) -> u64 {
        self.first_cycle + self.commands.len() as u64
    }

    pub fn covers(&self, cycle: u64) -> bool {
        cycle >= self.first_cycle && cycle < self.end_cycle()
    }

    pub fn command_at(&self, cycle: u64) -> Option<VelocityCommand> {
        if self.covers(cycle) {
            Some(self.commands[(cycle - self.first_cycle) as usize])
        } else {
            None
        }
    }

    /// Overwrites or appends the command of slot `cycle`. Slots between the
    /// current end and `cycle` are filled with `cmd` as well.
    pub fn set(&mut self, cycle: u64, cmd: VelocityCommand) {
        assert!(cycle >= self.first_cycle, "cannot rewrite the past");
        while self.end_cycle() <= cycle {
            self.commands.push(cmd);
        }
        let k = (cycle - self.first_cycle) as usize;
        self.commands[k] = cmd;
    }

    /// Drops slots before `cycle`.
    pub fn shift_to(&mut self, cycle: u64) {
        if cycle <= self.first_cycle {
            return;
        }
        let drop = ((cycle - self.first_cycle) as usize).min(self.commands.len());
        self.commands.drain(..drop);
        self.first_cycle = cycle;
    }

    /// `(start time, command)` pairs.
    pub fn segments(&self, t_step: f64) -> Vec<(f64, VelocityCommand)> {
        self.commands
            .iter()
            .enumerate()
            .map(|(k, c)| ((self.first_cycle + k as u64) as f64 * t_step, *c))
            .collect()
    }

    /// Position after executing slots `from..to` starting at `start`.
    /// Uncovered slots are treated as a stop.
    pub fn advance(&self, start: Vec2, from: u64, to: u64, t_step: f64) -> Vec2 {
        (from..to).fold(start, |p, k| {
            p + self.command_at(k).unwrap_or(VelocityCommand::ZERO).as_vec() * t_step
        })
    }
}

/// A desired command submitted by an agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentRecord {
    pub agent_id: usize,
    pub desired: VelocityCommand,
    pub submit_time: f64,
    pub version: u64,
}

/// Double-buffered intent store. Agents append; each coordinator cycle reads
/// the newest record submitted up to its cut-off.
#[derive(Clone, Debug, Default)]
pub struct IntentBuffer {
    records: Vec<IntentRecord>,
    next_version: BTreeMap<usize, u64>,
}

impl IntentBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Submits a new intent; versions increase per agent.
    pub fn submit(&mut self, agent_id: usize, desired: VelocityCommand, submit_time: f64) -> u64 {
        let v = self.next_version.entry(agent_id).or_insert(1);
        let version = *v;
        *v += 1;
        self.records.push(IntentRecord {
            agent_id,
            desired,
            submit_time,
            version,
        });
        version
    }

    pub fn records(&self) -> &[IntentRecord] {
        &self.records
    }

    /// Discards per agent every record older than the newest one visible at
    /// `cutoff`. Records after the cut-off are kept.
    pub fn compact(&mut self, cutoff: f64) {
        let mut newest: BTreeMap<usize, u64> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.submit_time <= cutoff) {
            let e = newest.entry(r.agent_id).or_insert(0);
            *e = (*e).max(r.version);
        }
        self.records.retain(|r| {
            r.submit_time > cutoff || newest.get(&r.agent_id).is_some_and(|&v| r.version >= v)
        });
    }
}

/// Per agent, the highest-version record submitted no later than `cutoff`.
/// Agents without such a record fall back to their nominal command.
pub fn snapshot_intents(
    buffer: &[IntentRecord],
    cutoff: f64,
    agents: &[AgentState],
    world: &WorldConfig,
) -> BTreeMap<usize, VelocityCommand> {
    let mut best: BTreeMap<usize, &IntentRecord> = BTreeMap::new();
    for r in buffer.iter().filter(|r| r.submit_time <= cutoff) {
        match best.get(&r.agent_id) {
            Some(b) if b.version >= r.version => {}
            _ => {
                best.insert(r.agent_id, r);
            }
        }
    }
    agents
        .iter()
        .map(|a| {
            let cmd = match best.get(&a.id) {
                Some(r) => r.desired,
                None => nominal_command(a, world),
            };
            (a.id, cmd)
        })
        .collect()
}
