//! Iterative best-response DMPC baseline.
//!
//! Every agent starts at its nominal command. Sweeps visit agents in id order
//! and let each pick, from a fixed grid of constant-velocity candidates, the
//! one minimizing goal tracking plus a separation penalty against the other
//! agents' current choices. There are no commitments and no look-ahead
//! beyond the prediction horizon.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::world::{nominal_command, AgentState, VelocityCommand, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmpcConfig {
    pub iterations: usize,
    /// Prediction horizon, seconds.
    pub horizon: f64,
    /// Prediction sampling step, seconds.
    pub dt: f64,
    /// Speed levels spread evenly over `[0, v_max]`.
    pub speed_levels: usize,
    /// Headings spread evenly over the circle (the nominal heading is added).
    pub heading_levels: usize,
    pub separation_weight: f64,
    /// Safety margin added to the radii in the separation penalty.
    pub margin: f64,
    /// Extra clearance the penalty asks for on top of the margin.
    pub buffer: f64,
}

impl Default for DmpcConfig {
    fn default() -> Self {
        DmpcConfig {
            iterations: 3,
            horizon: 1.0,
            dt: 0.05,
            speed_levels: 5,
            heading_levels: 16,
            separation_weight: 10.0,
            margin: 0.3,
            buffer: 0.1,
        }
    }
}

impl DmpcConfig {
    fn samples(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// Candidate commands for one agent, nominal heading first, fastest first.
pub fn candidate_grid(nominal: Vec2, cfg: &DmpcConfig, v_max: f64) -> Vec<Vec2> {
    let levels = cfg.speed_levels.max(2);
    let speeds: Vec<f64> = (0..levels)
        .rev()
        .map(|k| v_max * k as f64 / (levels - 1) as f64)
        .collect();
    let mut out = Vec::with_capacity(levels * (cfg.heading_levels + 1));
    let mut headings = Vec::with_capacity(cfg.heading_levels + 1);
    if let Some(dir) = nominal.normalized() {
        headings.push(dir);
    }
    for h in 0..cfg.heading_levels {
        let a = std::f64::consts::TAU * h as f64 / cfg.heading_levels as f64;
        headings.push(Vec2::new(a.cos(), a.sin()));
    }
    for (k, dir) in headings.iter().enumerate() {
        for (j, &s) in speeds.iter().enumerate() {
            if s <= 0.0 {
                continue;
            }
            if k == 0 && j == 0 && nominal != Vec2::ZERO {
                out.push(nominal);
            } else {
                out.push(*dir * s);
            }
        }
    }
    out.push(Vec2::ZERO);
    out
}

struct Plan<'a> {
    state: &'a AgentState,
    nominal: Vec2,
    choice: Vec2,
}

fn candidate_cost(me: &Plan<'_>, v: Vec2, others: &[(Vec2, f64, Vec2)], cfg: &DmpcConfig) -> f64 {
    let tracking = (v - me.nominal).norm_sq() * cfg.horizon;
    let mut penalty = 0.0;
    for &(pos, radius, vel) in others {
        let keep = me.state.radius + radius + cfg.margin + cfg.buffer;
        let rel = pos - me.state.position;
        let rel_v = vel - v;
        for m in 1..=cfg.samples() {
            let tau = m as f64 * cfg.dt;
            let d = (rel + rel_v * tau).norm();
            if d < keep {
                penalty += (keep - d) * (keep - d);
            }
        }
    }
    tracking + cfg.separation_weight * penalty
}

/// Runs the best-response sweeps over `agents` and returns a command per
/// active agent id.
pub fn dmpc_br_step(
    agents: &[AgentState],
    cfg: &DmpcConfig,
    world: &WorldConfig,
) -> BTreeMap<usize, VelocityCommand> {
    let mut plans: Vec<Plan<'_>> = agents
        .iter()
        .filter(|a| a.is_active())
        .map(|a| {
            let nominal = nominal_command(a, world).as_vec();
            Plan {
                state: a,
                nominal,
                choice: nominal,
            }
        })
        .collect();
    plans.sort_by_key(|p| p.state.id);

    // Others farther than this cannot enter the penalty zone within the horizon.
    let max_radius = plans.iter().map(|p| p.state.radius).fold(0.0_f64, f64::max);
    let reach = 2.0 * world.v_max * cfg.horizon + 2.0 * max_radius + cfg.margin + cfg.buffer;
    let neighbors: Vec<Vec<usize>> = (0..plans.len())
        .map(|i| {
            (0..plans.len())
                .filter(|&j| {
                    j != i
                        && plans[i].state.position.distance(plans[j].state.position)
                            <= reach.min(world.neighbor_radius)
                })
                .collect()
        })
        .collect();

    let candidates: Vec<Vec<Vec2>> = plans
        .iter()
        .map(|p| candidate_grid(p.nominal, cfg, world.v_max))
        .collect();

    let mut others = Vec::new();
    for _ in 0..cfg.iterations {
        for i in 0..plans.len() {
            if neighbors[i].is_empty() {
                continue;
            }
            others.clear();
            others.extend(neighbors[i].iter().map(|&j| {
                let p = &plans[j];
                (p.state.position, p.state.radius, p.choice)
            }));
            let me = &plans[i];
            let mut best = (candidate_cost(me, me.choice, &others, cfg), me.choice);
            for &c in &candidates[i] {
                let cost = candidate_cost(me, c, &others, cfg);
                if cost < best.0 {
                    best = (cost, c);
                }
            }
            plans[i].choice = best.1;
        }
    }

    plans
        .iter()
        .map(|p| (p.state.id, VelocityCommand::new(p.choice, world.v_max)))
        .collect()
}
