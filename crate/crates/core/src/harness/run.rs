//! The simulation loop shared by all methods.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::comms::{execute_with_fallback, AgentBuffer, CommBus, CommConfig};
use crate::controllers::{
    dmpc_br_step, orca_step, vo_projection_intent, DmpcConfig, Method, OrcaConfig, OrcaNeighbor,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::hierarchy::{
    assign_ownership, build_tube, exchange_shadows, partition_grid, Subspace, DEFAULT_E_TRACK,
};
use crate::metrics::{classify_deadlock, quantile, DeadlockParams, RunMetrics, RunningMean};
use crate::prollect::{
    preemption_rate, Coordinator, ExternalTrack, FrozenPlan, IntentBuffer, ProllectConfig,
};
use crate::safety::{project_safe, Obstacle, ProjActCounter, ProjectionConfig};
use crate::world::{
    integrate_step, min_center_distance, min_pairwise_distance, nominal_command, AgentState,
    TimingConfig, VelocityCommand, WorldConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub timing: TimingConfig,
    pub comm: CommConfig,
    pub projection: ProjectionConfig,
    pub world: WorldConfig,
    pub orca: OrcaConfig,
    pub dmpc: DmpcConfig,
    pub prollect: ProllectConfig,
    pub preemption_enabled: bool,
    pub seeds: usize,
    /// Coordinator grid `(nx, ny)`; `(1, 1)` is a single coordinator.
    pub partition: (usize, usize),
    pub overlap_band: f64,
    pub e_track: f64,
    pub deadlock: DeadlockParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let timing = TimingConfig::default();
        let world = WorldConfig::default();
        let projection = ProjectionConfig {
            margin: world.safety_margin,
            horizon: timing.t_step,
            dt: timing.dt,
            v_max: world.v_max,
            ..ProjectionConfig::default()
        };
        ExperimentConfig {
            method: Method::Prollect,
            timing,
            comm: CommConfig::default(),
            projection,
            world,
            orca: OrcaConfig::default(),
            dmpc: DmpcConfig::default(),
            prollect: ProllectConfig::default(),
            preemption_enabled: true,
            seeds: 30,
            partition: (1, 1),
            overlap_band: 4.0,
            e_track: DEFAULT_E_TRACK,
            deadlock: DeadlockParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Frozen multiplier and delivery delay, keeping the timing consistent.
    pub fn with_comms(mut self, alpha: usize, delay_cycles: usize, p_drop: f64) -> Self {
        self.timing = self
            .timing
            .clone()
            .with_alpha(alpha as f64)
            .with_delay_cycles(delay_cycles);
        self.comm.delay_cycles = delay_cycles;
        self.comm.p_drop = p_drop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        self.comm.validate()?;
        if self.comm.delay_cycles != self.timing.delay_cycles() {
            return Err(Error::Config(format!(
                "comm delay of {} cycles disagrees with t_tx = {}",
                self.comm.delay_cycles, self.timing.t_tx
            )));
        }
        if self.partition.0 == 0 || self.partition.1 == 0 {
            return Err(Error::Config(
                "partition needs at least one cell per axis".into(),
            ));
        }
        Ok(())
    }
}

/// Per-cycle observations used by the verification checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    /// Sum over agents of the remaining distance to goal (0 once completed),
    /// at the start of each cycle.
    pub remaining: Vec<f64>,
    /// Whether the coordinator issued directives in each cycle.
    pub preempted: Vec<bool>,
    /// Executed slot commands that differ from the plan committed for that
    /// slot one cycle earlier.
    pub frozen_mismatches: u64,
    /// Ownership changes: `(agent, cycle, from, to, plan unchanged)`.
    pub handovers: Vec<(usize, u64, usize, usize, bool)>,
    /// Shadows registered per cycle, summed over coordinators.
    pub shadow_count: Vec<usize>,
}

struct ProllectStack {
    subspaces: Vec<Subspace>,
    coordinators: Vec<Coordinator>,
    ownership: BTreeMap<usize, usize>,
    intents: IntentBuffer,
    bus: CommBus<BTreeMap<usize, FrozenPlan>>,
    buffers: Vec<Option<AgentBuffer>>,
    committed: BTreeMap<usize, FrozenPlan>,
}

impl ProllectStack {
    fn new(exp: &ExperimentConfig, scenario: &Scenario, n: usize) -> Result<Self> {
        let subspaces = partition_grid(
            scenario.workspace,
            exp.partition.0,
            exp.partition.1,
            exp.overlap_band,
        )?;
        let cfg = ProllectConfig {
            preemption: exp.preemption_enabled,
            ..exp.prollect.clone()
        };
        let coordinators = subspaces
            .iter()
            .map(|_| Coordinator::new(exp.timing.clone(), cfg.clone()))
            .collect();
        let comm = CommConfig {
            seed: exp.comm.seed,
            ..exp.comm.clone()
        };
        Ok(ProllectStack {
            subspaces,
            coordinators,
            ownership: BTreeMap::new(),
            intents: IntentBuffer::new(),
            bus: CommBus::new(comm),
            buffers: vec![None; n],
            committed: BTreeMap::new(),
        })
    }

    /// One coordination cycle; returns slot commands, starvation flags and
    /// whether any coordinator preempted.
    fn step(
        &mut self,
        cycle: u64,
        agents: &[AgentState],
        exp: &ExperimentConfig,
        world: &WorldConfig,
        trace: &mut RunTrace,
    ) -> (Vec<VelocityCommand>, Vec<bool>, bool) {
        let timing = &exp.timing;
        let t = cycle as f64 * timing.t_step;
        let active: Vec<AgentState> = agents.iter().filter(|a| a.is_active()).cloned().collect();
        for a in &active {
            self.intents.submit(a.id, nominal_command(a, world), t);
        }

        let owners = assign_ownership(&active, &self.subspaces, &self.ownership);
        for (&id, &to) in &owners {
            if let Some(&from) = self.ownership.get(&id) {
                if from != to {
                    let plan = self.coordinators[from].release(id);
                    let unchanged = match &plan {
                        Some(p) => {
                            let before = p.clone();
                            self.coordinators[to].adopt(p.clone());
                            self.coordinators[to].plans().get(&id) == Some(&before)
                        }
                        None => true,
                    };
                    trace.handovers.push((id, cycle, from, to, unchanged));
                }
            }
        }
        self.ownership = owners;

        let mut shadows = BTreeMap::new();
        if self.subspaces.len() > 1 {
            let span =
                (timing.frozen_cycles() + timing.delay_cycles() + timing.planning_cycles() + 1)
                    as f64
                    * timing.t_step
                    + timing.t_lookahead;
            let tubes: Vec<_> = active
                .iter()
                .map(|a| {
                    let owner = self.ownership[&a.id];
                    let extension = nominal_command(a, world);
                    let plan = self.coordinators[owner]
                        .plans()
                        .get(&a.id)
                        .cloned()
                        .unwrap_or_else(|| FrozenPlan::hold(a.id, cycle, extension, 0));
                    build_tube(a, &plan, extension, cycle, span, timing, exp.e_track)
                })
                .collect();
            shadows = exchange_shadows(&self.subspaces, &self.ownership, &tubes);
        }
        trace
            .shadow_count
            .push(shadows.values().map(|v: &Vec<_>| v.len()).sum());

        let mut preempted = false;
        let mut bundle = BTreeMap::new();
        for (k, coord) in self.coordinators.iter_mut().enumerate() {
            let owned: Vec<AgentState> = active
                .iter()
                .filter(|a| self.ownership.get(&a.id) == Some(&k))
                .cloned()
                .collect();
            let external: Vec<ExternalTrack> = shadows
                .get(&k)
                .map(|v| {
                    v.iter()
                        .map(|s| ExternalTrack {
                            tube: s.tube.clone(),
                            distance_to_goal: agents[s.agent_id].distance_to_goal(),
                        })
                        .collect()
                })
                .unwrap_or_default();
            let record = coord.cycle(cycle, &owned, &self.intents, &external, world);
            preempted |= record.preempt_triggered;
            for id in owned.iter().map(|a| a.id) {
                if let Some(p) = coord.plans().get(&id) {
                    bundle.insert(id, p.clone());
                }
            }
        }
        self.intents.compact(timing.snapshot_cutoff(t));

        let lead = (timing.frozen_cycles() + timing.delay_cycles()) as u64;
        self.bus.send(cycle, bundle.clone());
        let fresh = self.bus.receive(cycle);
        let mut cmds = vec![VelocityCommand::ZERO; agents.len()];
        let mut starved = vec![false; agents.len()];
        for a in &active {
            let delivered = fresh.as_ref().and_then(|(sent, b)| {
                b.get(&a.id).map(|plan| AgentBuffer {
                    plan: plan.clone(),
                    frozen_until: sent + lead - 1,
                })
            });
            let (cmd, s) = execute_with_fallback(&mut self.buffers[a.id], delivered, cycle);
            if !s {
                if let Some(prev) = self.committed.get(&a.id).and_then(|p| p.command_at(cycle)) {
                    if prev != cmd {
                        trace.frozen_mismatches += 1;
                    }
                }
            }
            cmds[a.id] = cmd;
            starved[a.id] = s;
        }
        self.committed = bundle;
        (cmds, starved, preempted)
    }

    fn preemption_rate(&self) -> f64 {
        // Cycles are shared: a cycle counts once if any coordinator preempted.
        let n = self
            .coordinators
            .iter()
            .map(|c| c.log().len())
            .max()
            .unwrap_or(0);
        if n == 0 {
            return 0.0;
        }
        if self.coordinators.len() == 1 {
            return preemption_rate(self.coordinators[0].log());
        }
        let mut hit = vec![false; n];
        for c in &self.coordinators {
            for (k, r) in c.log().iter().enumerate() {
                hit[k] |= r.preempt_triggered;
            }
        }
        hit.iter().filter(|h| **h).count() as f64 / n as f64
    }
}

/// Runs one scenario under one method.
pub fn run_single(scenario: &Scenario, exp: &ExperimentConfig) -> Result<RunMetrics> {
    run_with_trace(scenario, exp).map(|(m, _)| m)
}

/// Runs one scenario and also returns per-cycle observations.
pub fn run_with_trace(
    scenario: &Scenario,
    exp: &ExperimentConfig,
) -> Result<(RunMetrics, RunTrace)> {
    exp.validate()?;
    let world = WorldConfig {
        workspace: scenario.workspace,
        ..exp.world.clone()
    };
    let max_radius = scenario.agents.iter().map(|a| a.radius).fold(0.0, f64::max);
    world.validate(max_radius)?;
    let mut agents = scenario.agents.clone();
    if agents.iter().enumerate().any(|(i, a)| a.id != i) {
        return Err(Error::Scenario("agent ids must be 0..n in order".into()));
    }
    let n = agents.len();
    let timing = &exp.timing;
    let substeps = timing.substeps();
    let max_cycles = (world.max_time / timing.t_step - 1e-9).ceil() as u64;

    let mut prollect = match exp.method {
        Method::Prollect => Some(ProllectStack::new(exp, scenario, n)?),
        _ => None,
    };
    let mut trace = RunTrace::default();
    let mut last_exec = vec![Vec2::ZERO; n];
    let mut completion_time: Vec<Option<f64>> =
        agents.iter().map(|a| a.completed.then_some(0.0)).collect();
    let mut collision = false;
    let mut min_dist = min_center_distance(&agents);
    let mut min_clear = min_pairwise_distance(&agents);
    let mut dv = RunningMean::default();
    let mut speed = RunningMean::default();
    let mut speed_trace = Vec::new();
    let mut proj = ProjActCounter::default();
    let mut call_us: Vec<f64> = Vec::new();
    let mut starved_steps = 0u64;

    for cycle in 0..max_cycles {
        let t = cycle as f64 * timing.t_step;
        trace.remaining.push(
            agents
                .iter()
                .filter(|a| a.is_active())
                .map(|a| a.distance_to_goal())
                .sum(),
        );
        if agents.iter().all(|a| a.completed) {
            break;
        }
        let active: Vec<usize> = (0..n).filter(|&i| agents[i].is_active()).collect();
        let nominal: Vec<VelocityCommand> =
            agents.iter().map(|a| nominal_command(a, &world)).collect();

        let clock = Instant::now();
        let mut starved = vec![false; n];
        let intended: Vec<VelocityCommand> = match exp.method {
            Method::Vo => agents
                .iter()
                .map(|a| vo_projection_intent(a, &world))
                .collect(),
            Method::Orca => {
                let mut out = vec![VelocityCommand::ZERO; n];
                for &i in &active {
                    let nbrs: Vec<OrcaNeighbor<'_>> = active
                        .iter()
                        .filter(|&&j| {
                            j != i
                                && agents[j].position.distance(agents[i].position)
                                    <= world.neighbor_radius
                        })
                        .map(|&j| OrcaNeighbor {
                            state: &agents[j],
                            velocity: last_exec[j],
                        })
                        .collect();
                    out[i] = orca_step(&agents[i], last_exec[i], &nbrs, &exp.orca, &world);
                }
                out
            }
            Method::Dmpc => {
                let map = dmpc_br_step(&agents, &exp.dmpc, &world);
                (0..n)
                    .map(|i| map.get(&i).copied().unwrap_or(VelocityCommand::ZERO))
                    .collect()
            }
            Method::Prollect => {
                let stack = prollect.as_mut().expect("prollect stack");
                let (cmds, s, pre) = stack.step(cycle, &agents, exp, &world, &mut trace);
                starved = s;
                trace.preempted.push(pre);
                cmds
            }
        };
        let controller_us = clock.elapsed().as_secs_f64() * 1e6 / active.len().max(1) as f64;

        let mut executed = vec![Vec2::ZERO; n];
        for &i in &active {
            let clock = Instant::now();
            let obstacles: Vec<Obstacle> = active
                .iter()
                .filter(|&&j| {
                    j != i
                        && agents[j].position.distance(agents[i].position) <= world.neighbor_radius
                })
                .map(|&j| Obstacle {
                    id: j,
                    position: agents[j].position,
                    radius: agents[j].radius,
                    velocity: last_exec[j],
                })
                .collect();
            let out = project_safe(&agents[i], intended[i], &obstacles, &exp.projection);
            call_us.push(controller_us + clock.elapsed().as_secs_f64() * 1e6);
            proj.record(&out);
            executed[i] = out.executed.as_vec();
            dv.push((executed[i] - nominal[i].as_vec()).norm());
            speed.push(executed[i].norm());
            starved_steps += starved[i] as u64;
        }
        let mean_speed =
            active.iter().map(|&i| executed[i].norm()).sum::<f64>() / active.len() as f64;
        speed_trace.push((t, mean_speed));

        for s in 0..substeps {
            for &i in &active {
                if agents[i].completed {
                    continue;
                }
                let cmd = VelocityCommand::new(executed[i], world.v_max);
                agents[i] = integrate_step(&agents[i], cmd, timing.dt, &world);
                if agents[i].completed && completion_time[i].is_none() {
                    completion_time[i] = Some(t + (s + 1) as f64 * timing.dt);
                }
            }
            let c = min_pairwise_distance(&agents);
            min_clear = min_clear.min(c);
            min_dist = min_dist.min(min_center_distance(&agents));
            collision |= c < 0.0;
        }
        for i in 0..n {
            last_exec[i] = if agents[i].completed {
                Vec2::ZERO
            } else {
                executed[i]
            };
        }
    }

    let done = completion_time.iter().filter(|c| c.is_some()).count();
    let completed = done == n;
    let last_completion = completion_time
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    call_us.sort_by(f64::total_cmp);
    let metrics = RunMetrics {
        completed,
        collision,
        completion_time: completed.then_some(last_completion),
        min_dist,
        min_clearance: min_clear,
        avg_speed: speed.mean(),
        avg_dv: dv.mean(),
        preempt_rate: prollect.as_ref().map_or(0.0, |p| p.preemption_rate()),
        proj_act: proj.rate(),
        deadlock: classify_deadlock(&speed_trace, completed, &exp.deadlock),
        runtime_per_call_us: if call_us.is_empty() {
            0.0
        } else {
            quantile(&call_us, 0.5)
        },
        agents_completed_frac: done as f64 / n as f64,
        starved_steps,
    };
    Ok((metrics, trace))
}
