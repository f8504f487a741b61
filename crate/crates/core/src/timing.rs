//! Hybrid automaton of the coordinator cycle (calc, idle) and its dwell-time
//! audit.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::TimingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Calc,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridTimerState {
    pub mode: Mode,
    /// Seconds since the last reset.
    pub tau: f64,
    pub cycle_index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// Computation finished: calc to idle.
    Converged,
    /// Timer reached `t_step`: idle to calc with `tau` reset.
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: Transition,
    pub time: f64,
    /// Computation time of the cycle this event belongs to.
    pub t_adj: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingTrace {
    pub events: Vec<TraceEvent>,
}

impl TimingTrace {
    pub fn resets(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind == Transition::Reset)
    }
}

/// Uniform on `[(1 - jitter) t_adj_max, t_adj_max]`.
pub fn sample_adj_time(rng: &mut impl Rng, t_adj_max: f64, jitter_fraction: f64) -> f64 {
    let lo = (1.0 - jitter_fraction) * t_adj_max;
    if jitter_fraction <= 0.0 {
        return t_adj_max;
    }
    rng.gen_range(lo..=t_adj_max)
}

/// Simulates `n_cycles` coordinator cycles. Each starts in calc, converges
/// after a sampled computation time, idles, and resets when the timer
/// reaches `t_step`. Configurations violating `t_step > 1.5 t_adj_max` are
/// rejected.
pub fn hybrid_run(
    config: &TimingConfig,
    n_cycles: u64,
    jitter_fraction: f64,
    rng: &mut impl Rng,
) -> Result<TimingTrace> {
    config.validate_dwell()?;
    if !(0.0..1.0).contains(&jitter_fraction) {
        return Err(Error::Parameter {
            name: "jitter_fraction",
            value: jitter_fraction,
            reason: "must lie in [0, 1)",
        });
    }
    let mut state = HybridTimerState {
        mode: Mode::Calc,
        tau: 0.0,
        cycle_index: 0,
    };
    let mut trace = TimingTrace {
        events: Vec::with_capacity(2 * n_cycles as usize),
    };
    let mut start = 0.0;
    while state.cycle_index < n_cycles {
        let t_adj = sample_adj_time(rng, config.t_adj_max, jitter_fraction);
        debug_assert_eq!(state.mode, Mode::Calc);
        state.tau = t_adj;
        state.mode = Mode::Idle;
        trace.events.push(TraceEvent {
            kind: Transition::Converged,
            time: start + t_adj,
            t_adj,
        });
        state.tau = config.t_step;
        state.mode = Mode::Calc;
        state.cycle_index += 1;
        // Absolute times come from the cycle count so they do not drift.
        start = state.cycle_index as f64 * config.t_step;
        trace.events.push(TraceEvent {
            kind: Transition::Reset,
            time: start,
            t_adj,
        });
        state.tau = 0.0;
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellAudit {
    pub min_idle_dwell: f64,
    pub min_reset_gap: f64,
    pub zeno_free: bool,
}

/// Smallest idle dwell (`t_step - t_adj`) and reset gap in the trace.
pub fn dwell_audit(trace: &TimingTrace, config: &TimingConfig) -> DwellAudit {
    const TOL: f64 = 1e-9;
    let min_idle_dwell = trace
        .resets()
        .map(|e| config.t_step - e.t_adj)
        .fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = trace.resets().map(|e| e.time).collect();
    let min_reset_gap = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(times.first().copied())
        .fold(f64::INFINITY, f64::min);
    let floor = config.t_step - config.t_adj_max;
    let zeno_free =
        min_reset_gap >= config.t_step - TOL && min_idle_dwell >= floor - TOL && floor > 0.0;
    DwellAudit {
        min_idle_dwell,
        min_reset_gap,
        zeno_free,
    }
}

/// `timing_audit.csv` body.
pub fn timing_audit_csv(rows: &[(f64, f64, f64, DwellAudit)]) -> String {
    let mut out = String::from("t_step,t_adj_max,jitter,min_idle_dwell,zeno_free\n");
    for (t_step, t_adj_max, jitter, a) in rows {
        let _ = writeln!(
            out,
            "{t_step:.9},{t_adj_max:.9},{jitter:.9},{:.9},{}",
            a.min_idle_dwell, a.zeno_free
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::stream_rng;

    fn cfg(t_step: f64, t_adj_max: f64) -> TimingConfig {
        TimingConfig {
            t_step,
            t_adj_max,
            ..TimingConfig::default()
        }
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = stream_rng(0, 9);
        assert_eq!(sample_adj_time(&mut rng, 0.1, 0.0), 0.1);
        for _ in 0..10_000 {
            let s = sample_adj_time(&mut rng, 0.1, 0.5);
            assert!((0.05..=0.1).contains(&s));
        }
    }

    #[test]
    fn strict_dwell_boundary() {
        let mut rng = stream_rng(0, 9);
        assert!(hybrid_run(&cfg(0.31, 0.2), 5, 0.0, &mut rng).is_ok());
        match hybrid_run(&cfg(0.30, 0.2), 5, 0.0, &mut rng) {
            Err(Error::DwellTime { margin, .. }) => assert!(margin.abs() < 1e-12),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn long_trace_resets_every_step() {
        let c = cfg(0.2, 0.1);
        let mut rng = stream_rng(1, 9);
        let trace = hybrid_run(&c, 10_000, 0.4, &mut rng).unwrap();
        let resets: Vec<f64> = trace.resets().map(|e| e.time).collect();
        assert_eq!(resets.len(), 10_000);
        for w in resets.windows(2) {
            assert!((w[1] - w[0] - 0.2).abs() < 1e-9);
        }
        let audit = dwell_audit(&trace, &c);
        assert!(audit.zeno_free);
        assert!(audit.min_idle_dwell >= c.t_step - c.t_adj_max);
        assert!(audit.min_idle_dwell >= 0.5 * c.t_adj_max);
    }

    #[test]
    fn dwell_without_jitter() {
        let c = cfg(0.16, 0.1);
        let mut rng = stream_rng(0, 9);
        let trace = hybrid_run(&c, 100, 0.0, &mut rng).unwrap();
        let a = dwell_audit(&trace, &c);
        assert!((a.min_idle_dwell - 0.6 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn injected_short_gap_is_flagged() {
        let c = cfg(0.2, 0.1);
        let mut rng = stream_rng(0, 9);
        let mut trace = hybrid_run(&c, 10, 0.0, &mut rng).unwrap();
        let k = trace
            .events
            .iter()
            .rposition(|e| e.kind == Transition::Reset)
            .unwrap();
        trace.events[k].time -= 0.05;
        assert!(!dwell_audit(&trace, &c).zeno_free);
    }

    #[test]
    fn transmission_time_does_not_change_trace() {
        let a = cfg(0.2, 0.1);
        let b = TimingConfig {
            t_tx: 0.15,
            t_pad: 0.2,
            ..a.clone()
        };
        let ta = hybrid_run(&a, 200, 0.3, &mut stream_rng(4, 9)).unwrap();
        let tb = hybrid_run(&b, 200, 0.3, &mut stream_rng(4, 9)).unwrap();
        assert_eq!(ta, tb);
    }
}
