//! Per-run metrics and their aggregation across seeds.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Every agent reached its goal before the time limit.
    pub completed: bool,
    pub collision: bool,
    /// Time the last agent completed, seconds.
    pub completion_time: Option<f64>,
    /// Smallest centre distance between active agents, metres.
    pub min_dist: f64,
    /// Smallest surface clearance between active agents, metres.
    pub min_clearance: f64,
    pub avg_speed: f64,
    pub avg_dv: f64,
    pub preempt_rate: f64,
    pub proj_act: f64,
    pub deadlock: bool,
    /// Median wall time of one control call per agent, microseconds.
    pub runtime_per_call_us: f64,
    /// Fraction of agents that reached their goal.
    pub agents_completed_frac: f64,
    /// Agent-steps spent stopped for lack of a delivered plan.
    pub starved_steps: u64,
}

/// Mean of `|executed - nominal|` over paired samples; 0 when empty.
pub fn avg_velocity_disruption(executed: &[Vec2], nominal: &[Vec2]) -> f64 {
    assert_eq!(
        executed.len(),
        nominal.len(),
        "one nominal per executed command"
    );
    if executed.is_empty() {
        return 0.0;
    }
    executed
        .iter()
        .zip(nominal)
        .map(|(e, n)| (*e - *n).norm())
        .sum::<f64>()
        / executed.len() as f64
}

/// Running mean for long runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMean {
    pub sum: f64,
    pub count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeadlockParams {
    /// Speeds before this time are ignored, seconds.
    pub after: f64,
    /// Mean speed below this counts as stalled, m/s.
    pub threshold: f64,
}

impl Default for DeadlockParams {
    fn default() -> Self {
        DeadlockParams {
            after: 10.0,
            threshold: 0.1,
        }
    }
}

/// A run that did not complete and whose mean speed after `params.after`
/// is below the threshold. `speeds` holds `(time, speed)` samples.
pub fn classify_deadlock(speeds: &[(f64, f64)], completed: bool, params: &DeadlockParams) -> bool {
    if completed {
        return false;
    }
    let mut m = RunningMean::default();
    for &(_, v) in speeds.iter().filter(|(t, _)| *t > params.after) {
        m.push(v);
    }
    m.count > 0 && m.mean() < params.threshold
}

/// Linear interpolation between order statistics at rank `(n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Quartiles {
    /// `None` for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        })
    }

    /// `median [q25, q75]` with 9 decimals, or `--`.
    pub fn cell(q: Option<Quartiles>) -> String {
        match q {
            Some(q) => format!("{:.9} [{:.9}, {:.9}]", q.median, q.q25, q.q75),
            None => "--".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub runs: usize,
    pub completion_rate_pct: f64,
    pub collision_rate_pct: f64,
    pub deadlock_rate_pct: f64,
    /// Over completed runs only.
    pub completion_time: Option<Quartiles>,
    pub min_dist: Option<Quartiles>,
    pub avg_speed: Option<Quartiles>,
    pub avg_dv: Option<Quartiles>,
    pub preempt_rate: Option<Quartiles>,
    pub proj_act: Option<Quartiles>,
    pub runtime_us: Option<Quartiles>,
}

impl AggregateRow {
    /// Runs that failed to complete, percent.
    pub fn standoff_rate_pct(&self) -> f64 {
        100.0 - self.completion_rate_pct
    }
}

pub fn aggregate(runs: &[RunMetrics]) -> AggregateRow {
    let n = runs.len();
    let pct = |k: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * k as f64 / n as f64
        }
    };
    let q = |f: fn(&RunMetrics) -> f64| Quartiles::of(runs.iter().map(f).filter(|x| x.is_finite()));
    AggregateRow {
        runs: n,
        completion_rate_pct: pct(runs.iter().filter(|r| r.completed).count()),
        collision_rate_pct: pct(runs.iter().filter(|r| r.collision).count()),
        deadlock_rate_pct: pct(runs.iter().filter(|r| r.deadlock).count()),
        completion_time: Quartiles::of(runs.iter().filter_map(|r| r.completion_time)),
        min_dist: q(|r| r.min_dist),
        avg_speed: q(|r| r.avg_speed),
        avg_dv: q(|r| r.avg_dv),
        preempt_rate: q(|r| r.preempt_rate),
        proj_act: q(|r| r.proj_act),
        runtime_us: q(|r| r.runtime_per_call_us),
    }
}
