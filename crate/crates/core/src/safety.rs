//! Shared discrete-time safety projection.
//!
//! Every method's intended command passes through [`project_safe`] before
//! integration. Each neighbor is predicted over one control horizon, sampled
//! at the integration step, under two hypotheses: it keeps its last executed
//! velocity, or it stops. The executed command must keep the surface
//! clearance to every neighbor at or above the margin, less a 1 cm
//! tolerance, under both. A pair already closer than that must not get
//! closer still. On top of that, an agent never heads toward a neighbor
//! faster than half their current gap per horizon. Two agents both held to
//! that cannot touch within the step, whatever each of them does.
//!
//! Only the part of a command that heads into a neighbor is cut, so agents
//! keep moving past each other sideways and never speed up, except when
//! stopping is not enough because a neighbor is driving into the agent.
//! Then the agent slides sideways, toward its goal side of the line of
//! centers. Exactly head-on pairs have no sideways part and stop: the
//! projection does not break such symmetric stand-offs by itself.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::world::{AgentState, VelocityCommand};

/// Slack below which a predicted clearance counts as a violation.
const SLACK_TOL: f64 = 1e-9;

/// The enforced clearance sits this far (m) below the margin, so that
/// agents whose planners hold exactly the margin can pass alongside each
/// other without being stopped by sub-millimeter dips.
const MARGIN_TOLERANCE: f64 = 0.01;

/// Goal bearings this close to the line of centers slide counter-clockwise.
const SLIDE_TIE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub margin: f64,
    pub max_iters: usize,
    pub eta: f64,
    /// Prediction horizon, seconds.
    pub horizon: f64,
    /// Sampling step of the prediction, seconds.
    pub dt: f64,
    pub v_max: f64,
    /// Also require the margin when a neighbor stops instead of holding its
    /// last velocity.
    pub brake_hypothesis: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            margin: 0.3,
            max_iters: 6,
            eta: 1e-9,
            horizon: 0.2,
            dt: 0.05,
            v_max: 1.5,
            brake_hypothesis: true,
        }
    }
}

impl ProjectionConfig {
    fn samples(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    /// Stable fingerprint of the operator and its parameters, recorded in run
    /// metadata so that experiments can assert every method shared the same
    /// projection.
    pub fn signature(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(b"project_safe/v2");
        for v in [self.margin, self.eta, self.horizon, self.dt, self.v_max] {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.write(&(self.max_iters as u64).to_le_bytes());
        h.write(&[self.brake_hypothesis as u8]);
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// A predicted disc obstacle: another agent or a shadow replica.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub id: usize,
    pub position: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

impl Obstacle {
    pub fn from_agent(state: &AgentState, cmd: VelocityCommand) -> Self {
        Obstacle {
            id: state.id,
            position: state.position,
            radius: state.radius,
            velocity: cmd.as_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionOutcome {
    pub intended: VelocityCommand,
    pub executed: VelocityCommand,
    pub modified: bool,
    pub iterations_used: usize,
    /// No admissible command was found; the zero command was returned.
    pub saturated: bool,
}

/// Geometry of one (agent, obstacle) constraint.
struct Pair {
    id: usize,
    /// Obstacle center relative to the agent.
    rel: Vec2,
    hypotheses: [Vec2; 2],
    n_hyp: usize,
    /// Center distance that must be kept.
    keep: f64,
    /// Unit vector toward the obstacle.
    normal: Vec2,
    /// Largest admissible speed toward the obstacle.
    cap: f64,
    horizon: f64,
}

impl Pair {
    fn new(agent: &AgentState, ob: &Obstacle, cfg: &ProjectionConfig) -> Self {
        let rel = ob.position - agent.position;
        let combined = agent.radius + ob.radius;
        let clearance = rel.norm() - combined;
        let required = (cfg.margin - MARGIN_TOLERANCE).min(clearance).max(0.0);
        let (hypotheses, n_hyp) = if cfg.brake_hypothesis && ob.velocity != Vec2::ZERO {
            ([ob.velocity, Vec2::ZERO], 2)
        } else {
            ([ob.velocity, Vec2::ZERO], 1)
        };
        Pair {
            id: ob.id,
            rel,
            hypotheses,
            n_hyp,
            keep: combined + required,
            normal: rel.normalized().unwrap_or(Vec2::ZERO),
            cap: clearance.max(0.0) / (2.0 * cfg.horizon),
            horizon: cfg.horizon,
        }
    }

    fn hyps(&self) -> &[Vec2] {
        &self.hypotheses[..self.n_hyp]
    }

    /// Smallest predicted (distance - keep) over samples and hypotheses, or
    /// the overshoot of the approach cap over the horizon if that is worse.
    fn slack(&self, v: Vec2, cfg: &ProjectionConfig) -> f64 {
        let mut worst = (self.cap - v.dot(self.normal)) * self.horizon;
        for &u in self.hyps() {
            for m in 1..=cfg.samples() {
                let tau = m as f64 * cfg.dt;
                let d = (self.rel + (u - v) * tau).norm();
                worst = worst.min(d - self.keep);
            }
        }
        worst
    }

    /// Open intervals of `x` for which `base + x * dir` violates this pair.
    fn bad_intervals(
        &self,
        base: Vec2,
        dir: Vec2,
        cfg: &ProjectionConfig,
        out: &mut Vec<(f64, f64)>,
    ) {
        let toward = dir.dot(self.normal);
        let room = self.cap - base.dot(self.normal);
        if toward > 0.0 {
            out.push((room / toward, f64::INFINITY));
        } else if toward < 0.0 {
            out.push((f64::NEG_INFINITY, room / toward));
        } else if room < 0.0 {
            out.push((f64::NEG_INFINITY, f64::INFINITY));
        }
        if self.keep <= 0.0 {
            return;
        }
        let keep_sq = self.keep * self.keep;
        for &u in self.hyps() {
            for m in 1..=cfg.samples() {
                let tau = m as f64 * cfg.dt;
                let w = self.rel + (u - base) * tau;
                let a = tau * tau * dir.norm_sq();
                let c = w.norm_sq() - keep_sq;
                if a <= 0.0 {
                    if c < 0.0 {
                        out.push((f64::NEG_INFINITY, f64::INFINITY));
                    }
                    continue;
                }
                let half_b = -tau * w.dot(dir);
                let disc = half_b * half_b - a * c;
                if disc > 0.0 {
                    let root = disc.sqrt();
                    out.push(((-half_b - root) / a, (-half_b + root) / a));
                }
            }
        }
    }
}

/// Largest `x` in `[lo, hi]` outside every open interval.
fn largest_admissible(intervals: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let mut x = hi;
    loop {
        let mut moved = false;
        for &(a, b) in intervals {
            if a < x && x < b {
                x = a;
                moved = true;
            }
        }
        if x < lo {
            return None;
        }
        if !moved {
            return Some(x);
        }
    }
}

/// Largest scale `s` in `[0, 1]` such that `s * v` satisfies every pair.
fn max_safe_scale(pairs: &[Pair], v: Vec2, cfg: &ProjectionConfig) -> Option<f64> {
    let mut intervals = Vec::new();
    for p in pairs {
        p.bad_intervals(Vec2::ZERO, v, cfg, &mut intervals);
    }
    largest_admissible(&intervals, 0.0, 1.0)
}

/// `v` with its component toward the obstacle of `pair` cut back as little
/// as `pair` allows, the sideways component kept. `None` when `v` does not
/// approach or even the sideways part alone violates.
fn remove_approach(pair: &Pair, v: Vec2, cfg: &ProjectionConfig) -> Option<Vec2> {
    let n = pair.rel.normalized()?;
    let toward = v.dot(n);
    if toward <= 0.0 {
        return None;
    }
    let sideways = v - n * toward;
    let mut intervals = Vec::new();
    pair.bad_intervals(sideways, n, cfg, &mut intervals);
    let x = largest_admissible(&intervals, 0.0, toward)?;
    Some(sideways + n * x)
}

/// Unit direction perpendicular to the line of centers, on the side of the
/// goal bearing; counter-clockwise when the goal lies on that line.
fn slide_direction(pair: &Pair, goal_dir: Vec2) -> Vec2 {
    let n = pair.rel.normalized().unwrap_or_else(|| Vec2::new(1.0, 0.0));
    let perp = n.perp_ccw();
    let side = perp.dot(goal_dir);
    if side < -SLIDE_TIE {
        -perp
    } else {
        perp
    }
}

/// Sideways speed along `dir` that restores `pair`, the smallest one at or
/// above `from`; the full speed when none does.
fn slide_speed(pair: &Pair, dir: Vec2, from: f64, cfg: &ProjectionConfig) -> f64 {
    let mut intervals = Vec::new();
    pair.bad_intervals(Vec2::ZERO, dir, cfg, &mut intervals);
    smallest_admissible(&intervals, from.max(0.0), cfg.v_max).unwrap_or(cfg.v_max)
}

/// Smallest `x` in `[lo, hi]` outside every open interval.
fn smallest_admissible(intervals: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let mut x = lo;
    loop {
        let mut moved = false;
        for &(a, b) in intervals {
            if a < x && x < b {
                x = b;
                moved = true;
            }
        }
        if x > hi {
            return None;
        }
        if !moved {
            return Some(x);
        }
    }
}

/// Projects `intended` onto commands that keep the required clearance to
/// every obstacle over the prediction horizon.
///
/// Each iteration takes the most violated pair and cuts back only the part
/// of the command heading into that neighbor. If that cannot help, the
/// whole command is scaled down, and when even a stop leaves a pair
/// violated (a neighbor is driving into this agent) the command becomes a
/// sideways slide around the most critical such neighbor. Out of iterations,
/// the intent is scaled down as far as needed, or zeroed.
pub fn project_safe(
    agent: &AgentState,
    intended: VelocityCommand,
    obstacles: &[Obstacle],
    cfg: &ProjectionConfig,
) -> ProjectionOutcome {
    let pairs: Vec<Pair> = obstacles.iter().map(|o| Pair::new(agent, o, cfg)).collect();
    let goal_dir = (agent.goal - agent.position)
        .normalized()
        .unwrap_or(Vec2::ZERO);
    let violated = |v: Vec2| pairs.iter().any(|p| p.slack(v, cfg) < -SLACK_TOL);
    let mut v = intended.as_vec();
    let mut iterations = 0;
    let mut saturated = false;

    while violated(v) {
        if iterations == cfg.max_iters {
            match max_safe_scale(&pairs, intended.as_vec(), cfg) {
                Some(s) => v = intended.as_vec() * s,
                None => {
                    v = Vec2::ZERO;
                    saturated = true;
                }
            }
            break;
        }
        iterations += 1;
        let (_, critical) = pairs
            .iter()
            .map(|p| (p.slack(v, cfg), p))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)))
            .expect("a violated command has a pair");
        if let Some(next) = remove_approach(critical, v, cfg) {
            v = next;
            continue;
        }
        if let Some(s) = max_safe_scale(&pairs, v, cfg) {
            v = v * s;
            continue;
        }
        let pushed = pairs
            .iter()
            .map(|p| (p.slack(Vec2::ZERO, cfg), p))
            .filter(|(s, _)| *s < -SLACK_TOL)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        let Some((_, pair)) = pushed else {
            // Only the current command was at fault; stopping is safe.
            v = Vec2::ZERO;
            continue;
        };
        let dir = slide_direction(pair, goal_dir);
        v = dir * slide_speed(pair, dir, v.dot(dir), cfg);
    }

    let executed = VelocityCommand { vx: v.x, vy: v.y };
    let modified = (executed.as_vec() - intended.as_vec()).norm() > cfg.eta;
    ProjectionOutcome {
        intended,
        executed,
        modified,
        iterations_used: iterations,
        saturated,
    }
}

/// Predicted worst slack of `v` against `obstacles` (negative = violation).
/// Exposed for verification oracles.
pub fn predicted_slack(
    agent: &AgentState,
    v: Vec2,
    obstacles: &[Obstacle],
    cfg: &ProjectionConfig,
) -> f64 {
    obstacles
        .iter()
        .map(|o| Pair::new(agent, o, cfg).slack(v, cfg))
        .fold(f64::INFINITY, f64::min)
}

/// Fraction of outcomes that modified the intended command; 0 when empty.
pub fn proj_act_rate(log: &[ProjectionOutcome]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().filter(|o| o.modified).count() as f64 / log.len() as f64
}

/// Streaming ProjAct counter for long runs.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProjActCounter {
    pub calls: u64,
    pub modified: u64,
}

impl ProjActCounter {
    pub fn record(&mut self, outcome: &ProjectionOutcome) {
        self.calls += 1;
        self.modified += outcome.modified as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.calls == 0 {
            0.0
        } else {
            self.modified as f64 / self.calls as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: usize, x: f64, y: f64, gx: f64, gy: f64) -> AgentState {
        AgentState::new(id, Vec2::new(x, y), Vec2::new(gx, gy), 0.5)
    }

    fn cmd(vx: f64, vy: f64) -> VelocityCommand {
        VelocityCommand::from_components(vx, vy, 1.5)
    }

    #[test]
    fn lone_agent_is_unchanged() {
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let out = project_safe(&a, cmd(1.5, 0.0), &[], &ProjectionConfig::default());
        assert_eq!(out.executed, cmd(1.5, 0.0));
        assert!(!out.modified);
        assert_eq!(out.iterations_used, 0);
    }

    #[test]
    fn diverging_pair_is_unchanged() {
        let cfg = ProjectionConfig::default();
        let a = agent(0, 0.0, 0.0, -10.0, 0.0);
        let b = agent(1, 1.5, 0.0, 10.0, 0.0);
        let ob = [Obstacle::from_agent(&b, cmd(1.5, 0.0))];
        let out = project_safe(&a, cmd(-1.5, 0.0), &ob, &cfg);
        assert!(!out.modified);
        assert_eq!(out.executed, cmd(-1.5, 0.0));
    }

    #[test]
    fn head_on_speed_matches_closed_form() {
        // Surface gap 0.8, neighbor closing at 1.5: the largest own speed
        // keeping the enforced 0.29 after one step is (0.8 - 0.29) / 0.2 - 1.5.
        let cfg = ProjectionConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let b = agent(1, 1.8, 0.0, -10.0, 0.0);
        let ob = [Obstacle::from_agent(&b, cmd(-1.5, 0.0))];
        let out = project_safe(&a, cmd(1.5, 0.0), &ob, &cfg);
        assert!(out.modified);
        assert!((out.executed.vx - 1.05).abs() < 1e-9, "{:?}", out.executed);
        assert!(out.executed.vy.abs() < 1e-12);
    }

    #[test]
    fn head_on_with_wide_gap_needs_no_change() {
        // Gap 1.1 allows closing at (1.1 - 0.3) / 0.2 = 4 m/s > 3 m/s.
        let cfg = ProjectionConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let b = agent(1, 2.1, 0.0, -10.0, 0.0);
        let ob = [Obstacle::from_agent(&b, cmd(-1.5, 0.0))];
        let out = project_safe(&a, cmd(1.5, 0.0), &ob, &cfg);
        assert!(!out.modified);
    }

    #[test]
    fn offset_encounter_keeps_sideways_motion() {
        let cfg = ProjectionConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let b = agent(1, 1.2, 0.4, -10.0, 0.4);
        let ob = [Obstacle::from_agent(&b, cmd(0.0, 0.0))];
        let v = Vec2::new(1.5, 0.0);
        let out = project_safe(&a, cmd(v.x, v.y), &ob, &cfg);
        assert!(out.modified && !out.saturated);

        // Oracle: keep the component across the line of centers, scan the
        // component along it for the largest admissible value.
        let n = Vec2::new(1.2, 0.4).normalized().unwrap();
        let sideways = v - n * v.dot(n);
        let steps = 100_000;
        let best = (0..=steps)
            .rev()
            .map(|k| v.dot(n) * k as f64 / steps as f64)
            .find(|&x| predicted_slack(&a, sideways + n * x, &ob, &cfg) >= 0.0)
            .unwrap();
        let expected = sideways + n * best;
        assert!(
            out.executed.as_vec().distance(expected) < 1e-4,
            "{:?} vs {expected:?}",
            out.executed
        );
        assert!(out.executed.vy < 0.0);
        assert!(out.executed.as_vec().norm() < 1.5);
        assert!(predicted_slack(&a, out.executed.as_vec(), &ob, &cfg) >= -1e-9);
    }

    #[test]
    fn pushed_agent_slides_toward_goal_side() {
        // b closes at 1.1 m/s from a surface gap of 0.5: standing still ends
        // at 0.28 < 0.29, so a must move sideways.
        let cfg = ProjectionConfig::default();
        let b = agent(1, 1.5, 0.0, -10.0, 0.0);
        let ob = [Obstacle::from_agent(&b, cmd(-1.1, 0.0))];
        let expected = ((1.29f64 * 1.29 - 1.28 * 1.28) / 0.04).sqrt();

        // Goal straight ahead: counter-clockwise.
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let out = project_safe(&a, VelocityCommand::ZERO, &ob, &cfg);
        assert!(out.modified && !out.saturated);
        assert_eq!(out.executed.vx, 0.0);
        assert!(
            (out.executed.vy - expected).abs() < 1e-9,
            "{:?}",
            out.executed
        );

        // Goal below the line of centers: slide down instead.
        let a = agent(0, 0.0, 0.0, 10.0, -3.0);
        let out = project_safe(&a, VelocityCommand::ZERO, &ob, &cfg);
        assert!(
            (out.executed.vy + expected).abs() < 1e-9,
            "{:?}",
            out.executed
        );
        assert!(out.executed.as_vec().norm() <= 1.5);
    }

    #[test]
    fn mirror_images_get_mirror_commands() {
        let cfg = ProjectionConfig::default();
        let a = agent(0, -1.0, 0.3, 10.0, 0.3);
        let b = agent(1, 1.0, -0.3, -10.0, -0.3);
        let a_ob = [Obstacle::from_agent(&b, cmd(-1.5, 0.0))];
        let b_ob = [Obstacle::from_agent(&a, cmd(1.5, 0.0))];
        let ea = project_safe(&a, cmd(1.5, 0.0), &a_ob, &cfg).executed;
        let eb = project_safe(&b, cmd(-1.5, 0.0), &b_ob, &cfg).executed;
        assert!((ea.vx + eb.vx).abs() < 1e-9 && (ea.vy + eb.vy).abs() < 1e-9);
    }

    #[test]
    fn sandwiched_agent_saturates_to_zero() {
        let cfg = ProjectionConfig::default();
        let a = agent(0, 0.0, 0.0, 10.0, 0.0);
        let b = agent(1, 0.2, 0.0, -10.0, 0.0);
        let c = agent(2, -0.2, 0.0, 10.0, 0.0);
        let ob = [
            Obstacle::from_agent(&b, cmd(-1.5, 0.0)),
            Obstacle::from_agent(&c, cmd(1.5, 0.0)),
        ];
        let out = project_safe(&a, cmd(1.5, 0.0), &ob, &cfg);
        assert!(out.modified);
        assert!(out.saturated);
        assert_eq!(out.executed, VelocityCommand::ZERO);
    }

    #[test]
    fn proj_act_examples() {
        let base = ProjectionOutcome {
            intended: VelocityCommand::ZERO,
            executed: VelocityCommand::ZERO,
            modified: false,
            iterations_used: 0,
            saturated: false,
        };
        let hit = ProjectionOutcome {
            modified: true,
            ..base
        };
        assert_eq!(proj_act_rate(&[]), 0.0);
        assert_eq!(proj_act_rate(&vec![base; 100]), 0.0);
        let mut log = vec![base; 645];
        log.extend(vec![hit; 355]);
        assert!((proj_act_rate(&log) - 0.355).abs() < 1e-12);
        assert_eq!(proj_act_rate(&vec![hit; 7]), 1.0);
    }

    #[test]
    fn signature_changes_with_parameters() {
        let a = ProjectionConfig::default();
        let b = ProjectionConfig {
            margin: 0.31,
            ..a.clone()
        };
        assert_eq!(a.signature(), ProjectionConfig::default().signature());
        assert_ne!(a.signature(), b.signature());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn disc() -> impl Strategy<Value = Vec2> {
            (0.0..1.5f64, 0.0..std::f64::consts::TAU)
                .prop_map(|(r, a)| Vec2::new(r * a.cos(), r * a.sin()))
        }

        fn scene() -> impl Strategy<Value = (Vec2, Vec<Obstacle>)> {
            let ob =
                (1.05..4.0f64, 0.0..std::f64::consts::TAU, disc()).prop_map(|(d, a, v)| (d, a, v));
            (disc(), prop::collection::vec(ob, 1..4)).prop_map(|(intent, obs)| {
                let obs = obs
                    .into_iter()
                    .enumerate()
                    .map(|(k, (d, a, v))| Obstacle {
                        id: k + 1,
                        position: Vec2::new(d * a.cos(), d * a.sin()),
                        radius: 0.5,
                        velocity: v,
                    })
                    .collect();
                (intent, obs)
            })
        }

        proptest! {
            #[test]
            fn safe_intent_passes_through((intent, obs) in scene()) {
                let cfg = ProjectionConfig::default();
                let a = agent(0, 0.0, 0.0, 10.0, 0.0);
                prop_assume!(predicted_slack(&a, intent, &obs, &cfg) >= 0.0);
                let c = VelocityCommand { vx: intent.x, vy: intent.y };
                let out = project_safe(&a, c, &obs, &cfg);
                prop_assert_eq!(out.executed, c);
                prop_assert!(!out.modified);
            }

            #[test]
            fn projection_is_idempotent((intent, obs) in scene()) {
                let cfg = ProjectionConfig::default();
                let a = agent(0, 0.0, 0.0, 10.0, 0.0);
                let c = VelocityCommand { vx: intent.x, vy: intent.y };
                let once = project_safe(&a, c, &obs, &cfg).executed;
                let twice = project_safe(&a, once, &obs, &cfg).executed;
                prop_assert!(once.as_vec().distance(twice.as_vec()) < 1e-9, "{:?} vs {:?}", once, twice);
            }

            #[test]
            fn never_worse_than_the_best_scaling((intent, obs) in scene()) {
                let cfg = ProjectionConfig::default();
                let a = agent(0, 0.0, 0.0, 10.0, 0.0);
                let c = VelocityCommand { vx: intent.x, vy: intent.y };
                let out = project_safe(&a, c, &obs, &cfg);
                prop_assume!(!out.saturated);
                let violation = |v: Vec2| (-predicted_slack(&a, v, &obs, &cfg)).max(0.0);
                let best = (0..=1000)
                    .map(|k| violation(intent * (k as f64 * 1e-3)))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(violation(out.executed.as_vec()) <= best + 1e-9);
                prop_assert!(out.executed.as_vec().norm() <= cfg.v_max + 1e-9);
            }

            #[test]
            fn mirrored_scene_mirrors_the_command((intent, obs) in scene()) {
                let cfg = ProjectionConfig::default();
                let flip = |v: Vec2| Vec2::new(v.x, -v.y);
                let a = agent(0, 0.0, 0.0, 10.0, 0.0);
                let mirrored: Vec<Obstacle> = obs
                    .iter()
                    .map(|o| Obstacle { position: flip(o.position), velocity: flip(o.velocity), ..*o })
                    .collect();
                let c = VelocityCommand { vx: intent.x, vy: intent.y };
                let m = VelocityCommand { vx: intent.x, vy: -intent.y };
                let e = project_safe(&a, c, &obs, &cfg).executed.as_vec();
                let em = project_safe(&a, m, &mirrored, &cfg).executed.as_vec();
                prop_assert!(flip(e).distance(em) < 1e-6, "{:?} vs {:?}", e, em);
            }
        }
    }
}
