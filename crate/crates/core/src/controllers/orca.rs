//! Reactive reciprocal velocity obstacles (ORCA) solved as a 2D LP.

use serde::{Deserialize, Serialize};

use super::lp::{self, Line};
use crate::geometry::Vec2;
use crate::world::{nominal_command, AgentState, VelocityCommand, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrcaConfig {
    /// Seconds of look-ahead for the truncated velocity obstacle.
    pub time_horizon: f64,
    pub neighbor_radius: f64,
    /// Added to each disc radius when building constraints.
    pub radius_padding: f64,
    /// Share of the avoidance effort this agent takes.
    pub responsibility: f64,
    /// Used to resolve pairs that already overlap.
    pub time_step: f64,
}

impl Default for OrcaConfig {
    fn default() -> Self {
        OrcaConfig {
            time_horizon: 1.0,
            neighbor_radius: 20.0,
            radius_padding: 0.15,
            responsibility: 0.5,
            time_step: 0.2,
        }
    }
}

/// A neighbor as seen by ORCA: state plus its current velocity.
#[derive(Clone, Copy, Debug)]
pub struct OrcaNeighbor<'a> {
    pub state: &'a AgentState,
    pub velocity: Vec2,
}

/// The ORCA half-plane induced by one neighbor.
pub fn orca_line(
    agent: &AgentState,
    velocity: Vec2,
    other: &AgentState,
    other_velocity: Vec2,
    cfg: &OrcaConfig,
) -> Line {
    let inv_horizon = 1.0 / cfg.time_horizon;
    let rel_pos = other.position - agent.position;
    let rel_vel = velocity - other_velocity;
    let dist_sq = rel_pos.norm_sq();
    let combined = agent.radius + other.radius + 2.0 * cfg.radius_padding;
    let combined_sq = combined * combined;

    let (direction, u) = if dist_sq > combined_sq {
        let w = rel_vel - rel_pos * inv_horizon;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq {
            // Closest boundary point lies on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined * inv_horizon - w_len),
            )
        } else {
            let leg = (dist_sq - combined_sq).sqrt();
            let direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined,
                    rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined,
                    -rel_pos.x * combined + rel_pos.y * leg,
                ) / dist_sq
            };
            let dot2 = rel_vel.dot(direction);
            (direction, direction * dot2 - rel_vel)
        }
    } else {
        let inv_step = 1.0 / cfg.time_step;
        let w = rel_vel - rel_pos * inv_step;
        let w_len = w.norm();
        let unit_w = w.normalized().unwrap_or_else(|| {
            (-rel_pos)
                .normalized()
                .unwrap_or_else(|| Vec2::new(if agent.id < other.id { -1.0 } else { 1.0 }, 0.0))
        });
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined * inv_step - w_len),
        )
    };
    Line {
        point: velocity + u * cfg.responsibility,
        direction,
    }
}

/// New velocity: the admissible command closest to the nominal one.
pub fn orca_step(
    agent: &AgentState,
    velocity: Vec2,
    neighbors: &[OrcaNeighbor<'_>],
    cfg: &OrcaConfig,
    world: &WorldConfig,
) -> VelocityCommand {
    let preferred = nominal_command(agent, world).as_vec();
    if agent.completed {
        return VelocityCommand::ZERO;
    }
    let mut ranked: Vec<(f64, usize, &OrcaNeighbor<'_>)> = neighbors
        .iter()
        .filter(|n| n.state.id != agent.id && n.state.is_active())
        .map(|n| (n.state.position.distance(agent.position), n.state.id, n))
        .filter(|(d, _, _)| *d <= cfg.neighbor_radius)
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let lines: Vec<Line> = ranked
        .iter()
        .map(|(_, _, n)| orca_line(agent, velocity, n.state, n.velocity, cfg))
        .collect();
    let v = lp::solve(&lines, world.v_max, preferred);
    VelocityCommand::new(v, world.v_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: usize, x: f64, y: f64, gx: f64, gy: f64) -> AgentState {
        AgentState::new(id, Vec2::new(x, y), Vec2::new(gx, gy), 0.5)
    }

    #[test]
    fn no_neighbors_gives_nominal() {
        let w = WorldConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 3.0);
        let v = orca_step(&a, Vec2::ZERO, &[], &OrcaConfig::default(), &w);
        assert_eq!(v, nominal_command(&a, &w));
    }

    #[test]
    fn receding_neighbor_leaves_nominal() {
        let w = WorldConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let b = agent(1, 3.0, 0.0, 30.0, 0.0);
        // b recedes at 2 m/s, faster than a can follow.
        let n = [OrcaNeighbor {
            state: &b,
            velocity: Vec2::new(2.0, 0.0),
        }];
        let v = orca_step(&a, Vec2::new(1.5, 0.0), &n, &OrcaConfig::default(), &w);
        assert_eq!(v, nominal_command(&a, &w));
    }

    #[test]
    fn completed_agent_stops() {
        let w = WorldConfig::default();
        let mut a = agent(0, 0.0, 0.0, 10.0, 0.0);
        a.completed = true;
        let v = orca_step(&a, Vec2::ZERO, &[], &OrcaConfig::default(), &w);
        assert_eq!(v, VelocityCommand::ZERO);
    }

    /// Closest point to `target` in the disc satisfying `line`, by grid.
    fn sampled_best(line: &Line, v_max: f64, target: Vec2) -> Vec2 {
        let steps = 600;
        let mut best = (f64::INFINITY, Vec2::ZERO);
        for i in 0..=steps {
            for j in 0..=steps {
                let p = Vec2::new(
                    -v_max + 2.0 * v_max * i as f64 / steps as f64,
                    -v_max + 2.0 * v_max * j as f64 / steps as f64,
                );
                if p.norm() <= v_max && line.violation(p) <= 0.0 && p.distance(target) < best.0 {
                    best = (p.distance(target), p);
                }
            }
        }
        best.1
    }

    #[test]
    fn head_on_pair_deflects_symmetrically() {
        let w = WorldConfig::default();
        let cfg = OrcaConfig::default();
        for half_gap in [3.0, 1.25] {
            let a = agent(0, -half_gap, 0.0, 20.0, 0.0);
            let b = agent(1, half_gap, 0.0, -20.0, 0.0);
            let (va, vb) = (Vec2::new(1.5, 0.0), Vec2::new(-1.5, 0.0));
            let na = [OrcaNeighbor {
                state: &b,
                velocity: vb,
            }];
            let nb = [OrcaNeighbor {
                state: &a,
                velocity: va,
            }];
            let ca = orca_step(&a, va, &na, &cfg, &w).as_vec();
            let cb = orca_step(&b, vb, &nb, &cfg, &w).as_vec();
            let oracle = sampled_best(&orca_line(&a, va, &b, vb, &cfg), w.v_max, va);
            assert!(ca.distance(oracle) < 0.01, "{ca:?} vs {oracle:?}");
            assert!((ca + cb).norm() < 1e-9, "{ca:?} {cb:?}");
            if half_gap < 2.0 {
                assert!(ca.y.abs() > 0.1);
            } else {
                assert_eq!(ca, va);
            }
        }
    }
}
