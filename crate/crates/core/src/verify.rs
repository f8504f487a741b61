//! Executable checks of the protocol's guarantees.
//!
//! Each check returns a [`VerificationReport`] whose margin is non-negative
//! exactly when it passed. The asymptotic-stability argument is covered only
//! through the value monotonicity surrogate: a literal optimal-value test
//! would need the continuous trajectory optimization this simulator replaces
//! with speed factors.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comms::{blackout_audit, required_frozen_cycles, stream_rng, transmit, CommConfig};
use crate::controllers::Method;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::harness::{
    build_scenario, run_with_trace, ExperimentConfig, ScenarioKind, ScenarioSpec,
};
use crate::timing::{dwell_audit, hybrid_run, DwellAudit};
use crate::world::{TimingConfig, VelocityCommand};

/// RNG stream for verification fixtures, apart from scenarios and comms.
const VERIFY_STREAM: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    /// Worst slack seen over all trials; negative on failure.
    pub margin: f64,
    pub trials: u64,
}

impl VerificationReport {
    fn new(check: impl Into<String>, margin: f64, trials: u64) -> Self {
        VerificationReport {
            check: check.into(),
            passed: margin >= 0.0,
            margin,
            trials,
        }
    }
}

/// `verify_report.csv` body, rows sorted by check name.
pub fn report_csv(reports: &[VerificationReport]) -> String {
    let mut rows: Vec<&VerificationReport> = reports.iter().collect();
    rows.sort_by(|a, b| a.check.cmp(&b.check));
    let mut out = String::from("check,passed,margin,trials\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.9},{}", r.check, r.passed, r.margin, r.trials);
    }
    out
}

/// Committed plans of a group of agents, one command per slot from now on.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityFixture {
    pub positions: Vec<Vec2>,
    pub radius: f64,
    pub plans: Vec<Vec<VelocityCommand>>,
}

/// Slots a committed plan must cover: frozen, delay and planning slots and
/// the detection slot.
pub fn horizon_slots(timing: &TimingConfig) -> usize {
    timing.frozen_cycles() + timing.delay_cycles() + timing.planning_cycles() + 1
}

/// Smallest surface clearance minus `margin` over `slots` slots, sampled
/// every `dt` including the start.
fn plan_margin(
    positions: &[Vec2],
    plans: &[Vec<VelocityCommand>],
    radius: f64,
    margin: f64,
    slots: usize,
    timing: &TimingConfig,
) -> f64 {
    let mut p = positions.to_vec();
    let sep = |p: &[Vec2]| {
        let mut worst = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                worst = worst.min(p[i].distance(p[j]) - 2.0 * radius - margin);
            }
        }
        worst
    };
    let mut worst = sep(&p);
    for k in 0..slots {
        for _ in 0..timing.substeps() {
            for (x, plan) in p.iter_mut().zip(plans) {
                *x += plan[k].as_vec() * timing.dt;
            }
            worst = worst.min(sep(&p));
        }
    }
    worst
}

/// Random fixtures that are conflict-free over the committed horizon.
pub fn random_fixtures(
    count: usize,
    seed: u64,
    timing: &TimingConfig,
    radius: f64,
    margin: f64,
    v_max: f64,
) -> Vec<FeasibilityFixture> {
    let mut rng = stream_rng(seed, VERIFY_STREAM);
    let slots = horizon_slots(timing);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.gen_range(2..=6);
        let positions: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)))
            .collect();
        let plans: Vec<Vec<VelocityCommand>> = (0..n)
            .map(|_| {
                (0..slots)
                    .map(|_| {
                        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        let s: f64 = rng.gen_range(0.0..=v_max);
                        VelocityCommand::new(Vec2::new(a.cos(), a.sin()) * s, v_max)
                    })
                    .collect()
            })
            .collect();
        if plan_margin(&positions, &plans, radius, margin, slots, timing) >= 0.0 {
            out.push(FeasibilityFixture {
                positions,
                radius,
                plans,
            });
        }
    }
    out
}

/// Shift-and-append feasibility: after one slot, the remaining committed
/// slots followed by the terminal stop must keep every pair at the margin,
/// with no re-optimization. Fixtures whose plans do not cover the committed
/// horizon are a precondition error.
pub fn check_recursive_feasibility(
    fixtures: &[FeasibilityFixture],
    timing: &TimingConfig,
    margin: f64,
) -> Result<VerificationReport> {
    let slots = horizon_slots(timing);
    let mut worst = f64::INFINITY;
    for (k, fx) in fixtures.iter().enumerate() {
        if fx.plans.len() != fx.positions.len() || fx.plans.iter().any(|p| p.len() < slots) {
            return Err(Error::Precondition(format!(
                "fixture {k} does not cover the {slots}-slot committed horizon"
            )));
        }
        let next: Vec<Vec2> = fx
            .positions
            .iter()
            .zip(&fx.plans)
            .map(|(p, plan)| *p + plan[0].as_vec() * timing.t_step)
            .collect();
        let candidate: Vec<Vec<VelocityCommand>> = fx
            .plans
            .iter()
            .map(|plan| {
                let mut c = plan[1..slots].to_vec();
                c.push(VelocityCommand::ZERO);
                c
            })
            .collect();
        worst = worst.min(plan_margin(
            &next, &candidate, fx.radius, margin, slots, timing,
        ));
    }
    Ok(VerificationReport::new(
        "recursive_feasibility",
        worst,
        fixtures.len() as u64,
    ))
}

/// Summed remaining distance must not grow from one cycle to the next by
/// more than `dt * v_max` per active agent, once the last preemption and
/// the slots it adjusted have played out.
pub fn check_value_monotonicity(
    kind: ScenarioKind,
    n_agents: usize,
    seed: u64,
    exp: &ExperimentConfig,
) -> Result<VerificationReport> {
    let scenario = build_scenario(&ScenarioSpec::new(kind, n_agents, seed))?;
    let exp = ExperimentConfig {
        method: Method::Prollect,
        ..exp.clone()
    };
    let (_, trace) = run_with_trace(&scenario, &exp)?;
    let t = &exp.timing;
    let reach = horizon_slots(t);
    let from = trace
        .preempted
        .iter()
        .rposition(|&p| p)
        .map_or(0, |k| k + reach);
    let slack = n_agents as f64 * t.dt * exp.world.v_max;
    let mut worst = f64::INFINITY;
    let mut trials = 0;
    for w in trace.remaining.windows(2).skip(from) {
        worst = worst.min(w[0] + slack - w[1]);
        trials += 1;
    }
    if trials == 0 {
        worst = 0.0;
    }
    Ok(VerificationReport::new(
        format!("value_monotonicity_{}_seed{seed}", kind.name()),
        worst,
        trials,
    ))
}

/// One configuration of the disagreement dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IssCase {
    pub lambda_b: f64,
    pub l_f: f64,
    /// Amplitude of the mismatch input.
    pub d: f64,
}

/// Integrates `e' = -(lambda_b - L_f) e + d(t)` (the Lipschitz term at its
/// worst) from `e0` and returns the worst slack of
/// `|e(t)| <= exp(-c t / 2) |e(0)| + sqrt(1 / c) sup |d|`.
pub fn iss_slack(case: &IssCase, e0: Vec2, d_at: impl Fn(f64) -> Vec2, t_end: f64) -> Result<f64> {
    let c = case.lambda_b - case.l_f;
    if c <= 0.0 {
        return Err(Error::Precondition(format!(
            "lambda_b = {} must exceed L_f = {}",
            case.lambda_b, case.l_f
        )));
    }
    let h = 1e-3;
    let f = |t: f64, e: Vec2| -e * c + d_at(t);
    let mut e = e0;
    let mut t = 0.0;
    let mut sup_d = d_at(0.0).norm();
    let mut worst = f64::INFINITY;
    let steps = (t_end / h).ceil() as usize;
    for _ in 0..steps {
        let k1 = f(t, e);
        let k2 = f(t + h / 2.0, e + k1 * (h / 2.0));
        let k3 = f(t + h / 2.0, e + k2 * (h / 2.0));
        let k4 = f(t + h, e + k3 * h);
        e += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        for s in [t - h / 2.0, t] {
            sup_d = sup_d.max(d_at(s).norm());
        }
        let bound = (-c * t / 2.0).exp() * e0.norm() + (1.0 / c).sqrt() * sup_d;
        worst = worst.min(bound + 1e-6 - e.norm());
    }
    Ok(worst)
}

/// Twenty configurations with `lambda_b - L_f >= 1`, where the stated gain
/// `sqrt(1 / c)` bounds the exact steady state `|d| / c`.
pub fn iss_grid() -> Vec<IssCase> {
    let mut out = Vec::new();
    for (lambda_b, l_f) in [(1.0, 0.0), (2.0, 0.5), (3.0, 1.0), (5.0, 0.0), (8.0, 2.0)] {
        for d in [0.0, 0.1, 0.5, 2.0] {
            out.push(IssCase { lambda_b, l_f, d });
        }
    }
    out
}

/// Runs every case under a constant, an oscillating and a switching input.
pub fn check_iss_bound(cases: &[IssCase]) -> Result<VerificationReport> {
    let mut worst = f64::INFINITY;
    let mut trials = 0;
    for case in cases {
        let c = case.lambda_b - case.l_f;
        let t_end = 12.0 / c;
        let d = case.d;
        let inputs: [Box<dyn Fn(f64) -> Vec2>; 3] = [
            Box::new(move |_| Vec2::new(d, 0.0)),
            Box::new(move |t| Vec2::new((3.0 * t).cos(), (3.0 * t).sin()) * d),
            Box::new(move |t| {
                if (t * 2.0).floor() as i64 % 2 == 0 {
                    Vec2::new(0.0, d)
                } else {
                    Vec2::new(0.0, -d)
                }
            }),
        ];
        for e0 in [Vec2::new(1.0, 0.0), Vec2::new(-2.0, 3.0)] {
            for input in &inputs {
                worst = worst.min(iss_slack(case, e0, input, t_end)?);
                trials += 1;
            }
        }
    }
    Ok(VerificationReport::new("iss_bound", worst, trials))
}

/// Empirical rate of `K_f`-long blackout windows over `cycles` draws, with
/// the allowance `epsilon + 3 sigma` of a binomial proportion.
fn blackout_margin(epsilon: f64, p_drop: f64, k_f: usize, cycles: u64, seed: u64) -> Result<f64> {
    let cfg = CommConfig {
        p_drop,
        delay_cycles: 0,
        seed,
    };
    cfg.validate()?;
    let mut rng = cfg.rng();
    let drops: Vec<bool> = (0..cycles)
        .map(|c| !transmit(c, &cfg, &mut rng).delivered)
        .collect();
    let audit = blackout_audit(&drops, k_f);
    let sigma = (epsilon * (1.0 - epsilon) / cycles as f64).sqrt();
    Ok(epsilon + 3.0 * sigma - audit.empirical_violation_rate)
}

/// The frozen-horizon design rule, plus a negative control one cycle short
/// of it, which must exceed the allowance.
pub fn check_blackout_rule(
    epsilon: f64,
    p_drop: f64,
    cycles: u64,
    seed: u64,
) -> Result<(VerificationReport, VerificationReport)> {
    let k_f = required_frozen_cycles(epsilon, p_drop)?;
    let name = format!("blackout_eps{epsilon}_p{p_drop}");
    let rule = blackout_margin(epsilon, p_drop, k_f, cycles, seed)?;
    let control = if k_f > 1 && p_drop > 0.0 {
        -blackout_margin(epsilon, p_drop, k_f - 1, cycles, seed)?
    } else {
        // With K_f = 1 there is no shorter buffer to test.
        0.0
    };
    Ok((
        VerificationReport::new(name.clone(), rule, cycles),
        VerificationReport::new(format!("{name}_control"), control, cycles),
    ))
}

/// One dwell audit row: the configuration and what the trace showed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DwellRow {
    pub t_step: f64,
    pub t_adj_max: f64,
    pub jitter: f64,
    pub audit: DwellAudit,
}

/// Jittered cycles for each `(t_step, t_adj_max, jitter)`; the idle dwell
/// must never drop below `t_step - t_adj_max` and resets must be spaced by
/// `t_step`. Also checks that a configuration at the boundary is rejected.
pub fn check_dwell(
    configs: &[(f64, f64, f64)],
    cycles: u64,
    seed: u64,
) -> Result<(Vec<VerificationReport>, Vec<DwellRow>)> {
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut rng = stream_rng(seed, VERIFY_STREAM);
    for &(t_step, t_adj_max, jitter) in configs {
        let timing = TimingConfig {
            t_step,
            t_adj_max,
            ..TimingConfig::default()
        };
        let trace = hybrid_run(&timing, cycles, jitter, &mut rng)?;
        let audit = dwell_audit(&trace, &timing);
        let resets = trace.resets().count() as u64;
        let margin = if audit.zeno_free && resets == cycles {
            audit.min_idle_dwell - (t_step - t_adj_max)
        } else {
            -1.0
        };
        reports.push(VerificationReport::new(
            format!("dwell_tstep{t_step}_tadj{t_adj_max}_jitter{jitter}"),
            margin,
            cycles,
        ));
        rows.push(DwellRow {
            t_step,
            t_adj_max,
            jitter,
            audit,
        });
    }
    let boundary = TimingConfig {
        t_step: 0.3,
        t_adj_max: 0.2,
        ..TimingConfig::default()
    };
    let rejected = hybrid_run(&boundary, 1, 0.0, &mut rng).is_err();
    reports.push(VerificationReport::new(
        "dwell_rejects_boundary",
        if rejected { 0.0 } else { -1.0 },
        1,
    ));
    Ok((reports, rows))
}

/// Default dwell configurations: the protocol defaults under increasing
/// jitter and a tight ratio just above the bound.
pub const DWELL_CONFIGS: [(f64, f64, f64); 5] = [
    (0.2, 0.1, 0.0),
    (0.2, 0.1, 0.25),
    (0.2, 0.1, 0.49),
    (0.31, 0.2, 0.3),
    (0.16, 0.1, 0.49),
];

/// Boundary handover on a two-cell partition: every handed-over plan must
/// arrive unchanged and no executed slot may differ from its commitment.
pub fn check_handover(seed: u64) -> Result<VerificationReport> {
    let scenario = build_scenario(&ScenarioSpec::new(ScenarioKind::Intersection, 20, seed))?;
    let exp = ExperimentConfig {
        partition: (2, 1),
        ..ExperimentConfig::default()
    };
    let (metrics, trace) = run_with_trace(&scenario, &exp)?;
    let broken = trace.handovers.iter().filter(|h| !h.4).count() as u64 + trace.frozen_mismatches;
    let margin = if trace.handovers.is_empty() || metrics.collision {
        -1.0
    } else {
        0.0 - broken as f64
    };
    Ok(VerificationReport::new(
        "handover_continuity",
        margin,
        trace.handovers.len() as u64,
    ))
}

/// Sizes of the full suite.
#[derive(Clone, Copy, Debug)]
pub struct VerifyPlan {
    pub fixtures: usize,
    pub blackout_cycles: u64,
    pub dwell_cycles: u64,
    pub seed: u64,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        VerifyPlan {
            fixtures: 100,
            blackout_cycles: 100_000,
            dwell_cycles: 10_000,
            seed: 0,
        }
    }
}

/// Every check, sorted by name, and the dwell rows for `timing_audit.csv`.
pub fn run_all(plan: &VerifyPlan) -> Result<(Vec<VerificationReport>, Vec<DwellRow>)> {
    let exp = ExperimentConfig::default();
    let timing = &exp.timing;
    let mut reports = Vec::new();

    let fixtures = random_fixtures(
        plan.fixtures,
        plan.seed,
        timing,
        0.5,
        exp.world.safety_margin,
        exp.world.v_max,
    );
    reports.push(check_recursive_feasibility(
        &fixtures,
        timing,
        exp.world.safety_margin,
    )?);
    reports.push(check_value_monotonicity(
        ScenarioKind::Random,
        20,
        plan.seed,
        &exp,
    )?);
    reports.push(check_value_monotonicity(
        ScenarioKind::Intersection,
        20,
        plan.seed,
        &exp,
    )?);
    reports.push(check_iss_bound(&iss_grid())?);
    for epsilon in [0.05, 0.01] {
        for p_drop in [0.1, 0.2, 0.3] {
            let (rule, control) =
                check_blackout_rule(epsilon, p_drop, plan.blackout_cycles, plan.seed)?;
            reports.push(rule);
            reports.push(control);
        }
    }
    let (dwell, rows) = check_dwell(&DWELL_CONFIGS, plan.dwell_cycles, plan.seed)?;
    reports.extend(dwell);
    reports.push(check_handover(plan.seed)?);
    reports.sort_by(|a, b| a.check.cmp(&b.check));
    Ok((reports, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_lanes_margin_is_the_gap() {
        let t = TimingConfig::default();
        let v = VelocityCommand::from_components(1.5, 0.0, 1.5);
        let slots = horizon_slots(&t);
        let fx = FeasibilityFixture {
            positions: vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 2.0)],
            radius: 0.5,
            plans: vec![vec![v; slots]; 2],
        };
        let r = check_recursive_feasibility(&[fx], &t, 0.3).unwrap();
        assert!(r.passed);
        assert!((r.margin - (2.0 - 1.0 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn random_fixtures_stay_feasible() {
        let t = TimingConfig::default();
        let fx = random_fixtures(100, 3, &t, 0.5, 0.3, 1.5);
        let r = check_recursive_feasibility(&fx, &t, 0.3).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.trials, 100);
    }

    #[test]
    fn short_plans_are_a_precondition_error() {
        let t = TimingConfig::default();
        let fx = FeasibilityFixture {
            positions: vec![Vec2::ZERO, Vec2::new(5.0, 0.0)],
            radius: 0.5,
            plans: vec![vec![VelocityCommand::ZERO; 1]; 2],
        };
        assert!(matches!(
            check_recursive_feasibility(&[fx], &t, 0.3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn iss_decay_without_input() {
        let case = IssCase {
            lambda_b: 2.0,
            l_f: 1.0,
            d: 0.0,
        };
        let s = iss_slack(&case, Vec2::new(1.0, 0.0), |_| Vec2::ZERO, 10.0).unwrap();
        assert!(s >= 0.0);
    }

    #[test]
    fn iss_steady_state_within_gain() {
        // e -> d / c, and d / c <= sqrt(1 / c) d exactly when c >= 1.
        for c in [1.0, 1.5, 4.0, 10.0] {
            let case = IssCase {
                lambda_b: c,
                l_f: 0.0,
                d: 1.0,
            };
            let s = iss_slack(&case, Vec2::ZERO, |_| Vec2::new(1.0, 0.0), 30.0 / c).unwrap();
            assert!(s >= 0.0, "c = {c}");
            assert!((s - ((1.0 / c).sqrt() - 1.0 / c) - 1e-6).abs() < 1e-6);
        }
        let weak = IssCase {
            lambda_b: 0.5,
            l_f: 0.0,
            d: 1.0,
        };
        assert!(iss_slack(&weak, Vec2::ZERO, |_| Vec2::new(1.0, 0.0), 60.0).unwrap() < 0.0);
    }

    #[test]
    fn iss_gain_condition_is_enforced() {
        let case = IssCase {
            lambda_b: 1.0,
            l_f: 1.0,
            d: 0.0,
        };
        assert!(iss_slack(&case, Vec2::ZERO, |_| Vec2::ZERO, 1.0).is_err());
    }

    #[test]
    fn blackout_rule_and_control() {
        let (rule, control) = check_blackout_rule(0.05, 0.2, 100_000, 0).unwrap();
        assert!(rule.passed, "{rule:?}");
        assert!(control.passed, "{control:?}");
        let (rule, _) = check_blackout_rule(0.05, 0.0, 10_000, 0).unwrap();
        assert!((rule.margin - (0.05 + 3.0 * (0.05f64 * 0.95 / 10_000.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn dwell_checks_pass_and_boundary_is_rejected() {
        let (reports, rows) = check_dwell(&DWELL_CONFIGS, 10_000, 0).unwrap();
        assert!(reports.iter().all(|r| r.passed), "{reports:?}");
        assert_eq!(rows.len(), DWELL_CONFIGS.len());
        assert_eq!(rows[0].audit.min_idle_dwell, 0.2 - 0.1);
    }

    #[test]
    fn report_rows_are_sorted() {
        let csv = report_csv(&[
            VerificationReport::new("b", 1.0, 2),
            VerificationReport::new("a", -0.5, 3),
        ]);
        assert_eq!(
            csv,
            "check,passed,margin,trials\na,false,-0.500000000,3\nb,true,1.000000000,2\n"
        );
    }
}
