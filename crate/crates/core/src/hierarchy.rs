//! Workspace partition, ownership, spatiotemporal tubes and shadow agents.
//!
//! The workspace is split into a grid of subspaces whose interior edges
//! overlap by a band. Each agent is owned by exactly one subspace. Owners
//! publish the agent's planned footprint as a tube; neighbors whose cells the
//! tube touches register it as a read-only shadow obstacle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rect, Vec2};
use crate::prollect::FrozenPlan;
use crate::world::{AgentState, TimingConfig, VelocityCommand};

/// Default tracking envelope added to the agent radius in tubes.
pub const DEFAULT_E_TRACK: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub id: usize,
    pub rect: Rect,
    pub neighbor_ids: Vec<usize>,
    pub overlap_band: f64,
}

/// Splits `workspace` into `nx` by `ny` cells. Interior edges are pushed out
/// by half the band on each side so that adjacent cells share a strip of
/// width `overlap_band`. Neighbors are edge-adjacent cells.
pub fn partition_grid(
    workspace: Rect,
    nx: usize,
    ny: usize,
    overlap_band: f64,
) -> Result<Vec<Subspace>> {
    if nx == 0 || ny == 0 {
        return Err(Error::Config(
            "partition needs at least one cell per axis".into(),
        ));
    }
    if overlap_band.is_nan() || overlap_band <= 0.0 {
        return Err(Error::Parameter {
            name: "overlap_band",
            value: overlap_band,
            reason: "must be positive",
        });
    }
    let (w, h) = (
        workspace.width() / nx as f64,
        workspace.height() / ny as f64,
    );
    if (nx > 1 && overlap_band >= w) || (ny > 1 && overlap_band >= h) {
        return Err(Error::Config(format!(
            "overlap band {overlap_band} is not narrower than a {w} x {h} cell"
        )));
    }
    let half = overlap_band / 2.0;
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let mut min = Vec2::new(
                workspace.min.x + ix as f64 * w,
                workspace.min.y + iy as f64 * h,
            );
            let mut max = Vec2::new(min.x + w, min.y + h);
            if ix > 0 {
                min.x -= half;
            }
            if ix + 1 < nx {
                max.x += half;
            }
            if iy > 0 {
                min.y -= half;
            }
            if iy + 1 < ny {
                max.y += half;
            }
            if ix + 1 == nx {
                max.x = workspace.max.x;
            }
            if iy + 1 == ny {
                max.y = workspace.max.y;
            }
            let mut neighbor_ids = Vec::new();
            if iy > 0 {
                neighbor_ids.push((iy - 1) * nx + ix);
            }
            if ix > 0 {
                neighbor_ids.push(iy * nx + ix - 1);
            }
            if ix + 1 < nx {
                neighbor_ids.push(iy * nx + ix + 1);
            }
            if iy + 1 < ny {
                neighbor_ids.push((iy + 1) * nx + ix);
            }
            out.push(Subspace {
                id: iy * nx + ix,
                rect: Rect::new(min, max),
                neighbor_ids,
                overlap_band,
            });
        }
    }
    Ok(out)
}

/// Rejects cells narrower than `min_diameter` (handover thrashing guard).
pub fn check_cell_size(subspaces: &[Subspace], min_diameter: f64) -> Result<()> {
    for s in subspaces {
        let d = s.rect.width().min(s.rect.height());
        if d < min_diameter {
            return Err(Error::Config(format!(
                "subspace {} is {d} m across, below the minimum {min_diameter} m",
                s.id
            )));
        }
    }
    Ok(())
}

/// Centroid ownership with hysteresis. An agent keeps its previous owner
/// while its centre stays inside that owner's (band-expanded) rectangle;
/// otherwise the lowest-id containing subspace takes it. Agents outside every
/// cell go to the nearest one.
pub fn assign_ownership(
    states: &[AgentState],
    subspaces: &[Subspace],
    previous: &BTreeMap<usize, usize>,
) -> BTreeMap<usize, usize> {
    states
        .iter()
        .map(|s| {
            let p = s.position;
            if let Some(&prev) = previous.get(&s.id) {
                if subspaces.iter().any(|c| c.id == prev && c.rect.contains(p)) {
                    return (s.id, prev);
                }
            }
            let owner = subspaces
                .iter()
                .filter(|c| c.rect.contains(p))
                .map(|c| c.id)
                .min()
                .unwrap_or_else(|| {
                    subspaces
                        .iter()
                        .min_by(|a, b| {
                            a.rect
                                .distance_to(p)
                                .total_cmp(&b.rect.distance_to(p))
                                .then(a.id.cmp(&b.id))
                        })
                        .map(|c| c.id)
                        .unwrap_or(0)
                });
            (s.id, owner)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSample {
    pub t: f64,
    pub center: Vec2,
    pub inflated_radius: f64,
}

/// Time-indexed inflated footprint of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalTube {
    pub agent_id: usize,
    pub samples: Vec<TubeSample>,
}

impl SpatioTemporalTube {
    pub fn inflated_radius(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.inflated_radius)
    }

    /// Linearly interpolated centre, `None` outside the sampled span.
    pub fn center_at(&self, t: f64) -> Option<Vec2> {
        const TOL: f64 = 1e-9;
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t - TOL || t > last.t + TOL {
            return None;
        }
        let k = self.samples.partition_point(|s| s.t < t);
        if k == 0 {
            return Some(first.center);
        }
        if k >= self.samples.len() {
            return Some(last.center);
        }
        let (a, b) = (self.samples[k - 1], self.samples[k]);
        let w = (t - a.t) / (b.t - a.t);
        Some(a.center + (b.center - a.center) * w)
    }

    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        self.samples
            .iter()
            .any(|s| rect.intersects_disc(s.center, s.inflated_radius))
    }

    /// Rows `agent_id,t,cx,cy,R`, fixed 9 decimals.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{:.9},{:.9}",
                self.agent_id, s.t, s.center.x, s.center.y, s.inflated_radius
            );
        }
        out
    }

    /// Parses rows written by [`to_wire`](Self::to_wire); all rows must name
    /// the same agent.
    pub fn from_wire(text: &str) -> Result<Self> {
        let mut agent_id = None;
        let mut samples = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let parse_err = |reason: String| Error::Parse {
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(format!(
                    "expected 5 fields, got {}",
                    fields.len()
                )));
            }
            let id: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("agent_id: {e}")))?;
            if *agent_id.get_or_insert(id) != id {
                return Err(parse_err("rows belong to different agents".into()));
            }
            let mut nums = [0.0; 4];
            for (k, f) in fields[1..].iter().enumerate() {
                nums[k] = f
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(format!("field {}: {e}", k + 2)))?;
            }
            samples.push(TubeSample {
                t: nums[0],
                center: Vec2::new(nums[1], nums[2]),
                inflated_radius: nums[3],
            });
        }
        Ok(SpatioTemporalTube {
            agent_id: agent_id.ok_or_else(|| Error::Parse {
                line: 0,
                reason: "empty tube".into(),
            })?,
            samples,
        })
    }
}

/// Samples the agent's plan at `dt` from the start of slot `cycle` for
/// `span` seconds. Slots past the plan's end hold `extension`.
pub fn build_tube(
    state: &AgentState,
    plan: &FrozenPlan,
    extension: VelocityCommand,
    cycle: u64,
    span: f64,
    timing: &TimingConfig,
    e_track: f64,
) -> SpatioTemporalTube {
    let t0 = cycle as f64 * timing.t_step;
    let subs = timing.substeps();
    let n = (span / timing.dt).round() as usize;
    let radius = state.radius + e_track;
    let mut p = state.position;
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(TubeSample {
        t: t0,
        center: p,
        inflated_radius: radius,
    });
    for m in 0..n {
        let slot = cycle + (m / subs) as u64;
        let v = plan.command_at(slot).unwrap_or(extension).as_vec();
        p += v * timing.dt;
        samples.push(TubeSample {
            t: t0 + (m + 1) as f64 * timing.dt,
            center: p,
            inflated_radius: radius,
        });
    }
    SpatioTemporalTube {
        agent_id: state.id,
        samples,
    }
}

/// A read-only replica of an agent owned by another coordinator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowAgent {
    pub agent_id: usize,
    pub owner_coordinator: usize,
    pub tube: SpatioTemporalTube,
}

/// Sends every tube to each neighbor of its owner whose rectangle it
/// touches. Returns the shadows registered per receiving coordinator, in
/// agent id order.
pub fn exchange_shadows(
    subspaces: &[Subspace],
    ownership: &BTreeMap<usize, usize>,
    tubes: &[SpatioTemporalTube],
) -> BTreeMap<usize, Vec<ShadowAgent>> {
    let by_id: BTreeMap<usize, &Subspace> = subspaces.iter().map(|s| (s.id, s)).collect();
    let mut out: BTreeMap<usize, Vec<ShadowAgent>> =
        subspaces.iter().map(|s| (s.id, Vec::new())).collect();
    let mut sorted: Vec<&SpatioTemporalTube> = tubes.iter().collect();
    sorted.sort_by_key(|t| t.agent_id);
    for tube in sorted {
        let Some(owner) = ownership.get(&tube.agent_id).and_then(|o| by_id.get(o)) else {
            continue;
        };
        for nid in &owner.neighbor_ids {
            let Some(nb) = by_id.get(nid) else { continue };
            if tube.intersects_rect(&nb.rect) {
                out.entry(*nid).or_default().push(ShadowAgent {
                    agent_id: tube.agent_id,
                    owner_coordinator: owner.id,
                    tube: tube.clone(),
                });
            }
        }
    }
    out
}

/// Pulls each shadow sample toward the owner's sample at the same index by
/// `1 - exp(-lambda_b dt)` of the offset.
pub fn shadow_disagreement_correct(
    owner: &SpatioTemporalTube,
    shadow: &SpatioTemporalTube,
    lambda_b: f64,
    dt: f64,
) -> SpatioTemporalTube {
    let gain = if lambda_b.is_infinite() {
        1.0
    } else {
        1.0 - (-lambda_b * dt).exp()
    };
    let samples = shadow
        .samples
        .iter()
        .zip(owner.samples.iter().chain(std::iter::repeat(
            owner.samples.last().unwrap_or(&shadow.samples[0]),
        )))
        .map(|(s, o)| TubeSample {
            center: s.center + (o.center - s.center) * gain,
            ..*s
        })
        .collect();
    SpatioTemporalTube {
        agent_id: shadow.agent_id,
        samples,
    }
}

/// Largest centre offset between two tubes over shared sample indices.
pub fn tube_disagreement(a: &SpatioTemporalTube, b: &SpatioTemporalTube) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| x.center.distance(y.center))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world40() -> Rect {
        Rect::centered(20.0, 20.0)
    }

    fn agent_at(id: usize, x: f64, y: f64) -> AgentState {
        AgentState::new(id, Vec2::new(x, y), Vec2::new(x + 30.0, y), 0.5)
    }

    fn straight(id: usize, len: usize, vx: f64) -> FrozenPlan {
        FrozenPlan::hold(id, 0, VelocityCommand::from_components(vx, 0.0, 1.5), len)
    }

    #[test]
    fn single_cell_partition() {
        let p = partition_grid(world40(), 1, 1, 4.0).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].neighbor_ids.is_empty());
        assert_eq!(p[0].rect, world40());
    }

    #[test]
    fn two_by_one_shares_a_band() {
        let p = partition_grid(world40(), 2, 1, 4.0).unwrap();
        assert_eq!(p.len(), 2);
        for s in &p {
            assert!((s.rect.width() - 22.0).abs() < 1e-12);
            assert!((s.rect.height() - 40.0).abs() < 1e-12);
        }
        let shared = p[0].rect.intersection(&p[1].rect).unwrap();
        assert!((shared.width() - 4.0).abs() < 1e-12);
        assert_eq!(p[0].neighbor_ids, vec![1]);
        assert_eq!(p[1].neighbor_ids, vec![0]);
    }

    #[test]
    fn two_by_two_has_edge_neighbors_only() {
        let p = partition_grid(world40(), 2, 2, 4.0).unwrap();
        for s in &p {
            assert_eq!(s.neighbor_ids.len(), 2, "cell {}", s.id);
        }
        assert!(!p[0].neighbor_ids.contains(&3));
    }

    #[test]
    fn ownership_rules() {
        let p = partition_grid(world40(), 2, 1, 4.0).unwrap();
        let own = assign_ownership(
            &[agent_at(0, 10.0, 0.0), agent_at(1, 0.0, 0.0)],
            &p,
            &BTreeMap::new(),
        );
        assert_eq!(own[&0], 1);
        assert_eq!(own[&1], 0, "midline tie goes to the lower id");
    }

    #[test]
    fn crossing_the_band_flips_once() {
        let p = partition_grid(world40(), 2, 1, 4.0).unwrap();
        let mut own = BTreeMap::new();
        let mut flips = 0;
        let mut last = None;
        for k in 0..=100 {
            let x = -8.0 + 0.16 * k as f64;
            own = assign_ownership(&[agent_at(0, x, 3.0)], &p, &own);
            if last.is_some_and(|l| l != own[&0]) {
                flips += 1;
                // The flip happens only once the centre leaves the band.
                assert!(x > 2.0, "flipped at x = {x}");
            }
            last = Some(own[&0]);
        }
        assert_eq!(flips, 1);
        assert_eq!(own[&0], 1);
    }

    #[test]
    fn tube_shapes() {
        let timing = TimingConfig::default();
        let a = agent_at(0, 0.0, 0.0);
        let still = build_tube(
            &a,
            &straight(0, 10, 0.0),
            VelocityCommand::ZERO,
            0,
            2.0,
            &timing,
            0.05,
        );
        assert!(still.samples.iter().all(|s| s.center == a.position));
        assert!((still.inflated_radius() - 0.55).abs() < 1e-12);

        let moving = build_tube(
            &a,
            &straight(0, 10, 1.5),
            VelocityCommand::ZERO,
            0,
            2.0,
            &timing,
            0.0,
        );
        assert_eq!(moving.samples.len(), 41);
        assert_eq!(moving.inflated_radius(), 0.5);
        for w in moving.samples.windows(2) {
            assert!((w[1].center.x - w[0].center.x - 1.5 * 0.05).abs() < 1e-12);
            assert_eq!(w[1].center.y, 0.0);
            assert!(w[1].t > w[0].t);
        }
        let mid = moving.center_at(0.025).unwrap();
        assert!((mid.x - 0.0375).abs() < 1e-12);
        assert!(moving.center_at(2.5).is_none());
    }

    #[test]
    fn shadows_follow_boundary_contact() {
        let timing = TimingConfig::default();
        let p = partition_grid(world40(), 2, 2, 4.0).unwrap();
        let interior = agent_at(0, -12.0, -12.0);
        let crossing = agent_at(1, -6.0, -12.0);
        let corner = AgentState::new(2, Vec2::new(-3.0, -3.0), Vec2::new(-30.0, -30.0), 0.5);
        let tubes = vec![
            build_tube(
                &interior,
                &straight(0, 10, 0.0),
                VelocityCommand::ZERO,
                0,
                2.0,
                &timing,
                0.05,
            ),
            build_tube(
                &crossing,
                &straight(1, 20, 1.5),
                VelocityCommand::ZERO,
                0,
                4.0,
                &timing,
                0.05,
            ),
            build_tube(
                &corner,
                &FrozenPlan::hold(2, 0, VelocityCommand::from_components(1.0, 1.0, 1.5), 20),
                VelocityCommand::ZERO,
                0,
                4.0,
                &timing,
                0.05,
            ),
        ];
        let states = [interior, crossing, corner];
        let own = assign_ownership(&states, &p, &BTreeMap::new());
        assert!(own.values().all(|&o| o == 0));
        let shadows = exchange_shadows(&p, &own, &tubes);
        let ids = |c: usize| shadows[&c].iter().map(|s| s.agent_id).collect::<Vec<_>>();
        assert_eq!(ids(1), vec![1, 2]);
        assert_eq!(ids(2), vec![2]);
        assert!(ids(3).is_empty(), "diagonal cells are not neighbors");
        // Sampling oracle for the corner tube: it really reaches both cells.
        for c in [1, 2] {
            let r = p[c].rect;
            assert!(tubes[2]
                .samples
                .iter()
                .any(|s| r.distance_to(s.center) <= s.inflated_radius));
        }
    }

    #[test]
    fn disagreement_correction() {
        let timing = TimingConfig::default();
        let a = agent_at(0, 0.0, 0.0);
        let owner = build_tube(
            &a,
            &straight(0, 10, 1.0),
            VelocityCommand::ZERO,
            0,
            1.0,
            &timing,
            0.05,
        );
        assert_eq!(shadow_disagreement_correct(&owner, &owner, 2.0, 0.2), owner);

        let mut shadow = owner.clone();
        for s in &mut shadow.samples {
            s.center.y += 1.0;
        }
        let fixed = shadow_disagreement_correct(&owner, &shadow, 2.0, 0.2);
        assert!((tube_disagreement(&owner, &fixed) - (-0.4f64).exp()).abs() < 1e-12);
        // Forward Euler on e' = -2 e over 0.2 s with a fine step agrees.
        let mut e = 1.0;
        for _ in 0..200_000 {
            e -= 2.0 * e * 1e-6;
        }
        assert!((e - tube_disagreement(&owner, &fixed)).abs() < 1e-5);

        let snapped = shadow_disagreement_correct(&owner, &shadow, f64::INFINITY, 0.2);
        assert!(tube_disagreement(&owner, &snapped) < 1e-12);
    }

    #[test]
    fn wire_round_trip() {
        let timing = TimingConfig::default();
        let a = agent_at(7, 1.25, -3.5);
        let tube = build_tube(
            &a,
            &straight(7, 5, 1.5),
            VelocityCommand::ZERO,
            3,
            0.2,
            &timing,
            0.05,
        );
        let wire = tube.to_wire();
        assert!(wire.starts_with("7,0.600000000,1.250000000,-3.500000000,0.550000000\n"));
        let back = SpatioTemporalTube::from_wire(&wire).unwrap();
        assert_eq!(back.to_wire(), wire);
        assert!(SpatioTemporalTube::from_wire("1,2,3\n").is_err());
    }
}
