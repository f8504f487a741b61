//! Lossy plan dissemination: i.i.d. broadcast blackouts, a fixed delivery
//! delay, frozen-buffer fallback on the agent side, and the blackout design
//! rule.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prollect::FrozenPlan;
use crate::world::VelocityCommand;

/// Stream of the scenario generator.
pub const SCENARIO_STREAM: u64 = 0;
/// Stream of the blackout draws, independent of the scenario stream.
pub const COMMS_STREAM: u64 = 1;

/// Name of the generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Seeded generator on one of the named streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    pub p_drop: f64,
    pub delay_cycles: usize,
    pub seed: u64,
}

impl Default for CommConfig {
    fn default() -> Self {
        CommConfig {
            p_drop: 0.0,
            delay_cycles: 0,
            seed: 0,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Parameter {
                name: "p_drop",
                value: self.p_drop,
                reason: "must lie in [0, 1)",
            });
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, COMMS_STREAM)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryEntry {
    pub send_cycle: u64,
    pub delivered: bool,
    pub delivery_cycle: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryLog {
    pub entries: Vec<DeliveryEntry>,
}

impl DeliveryLog {
    /// `true` for each dropped cycle, in send order.
    pub fn drops(&self) -> Vec<bool> {
        self.entries.iter().map(|e| !e.delivered).collect()
    }
}

/// One Bernoulli draw for the bundle sent at `cycle`. A draw is consumed
/// every cycle whatever `p_drop` is, so runs that differ only in `p_drop`
/// see nested blackout sets.
pub fn transmit(cycle: u64, cfg: &CommConfig, rng: &mut impl Rng) -> DeliveryEntry {
    let u: f64 = rng.gen();
    DeliveryEntry {
        send_cycle: cycle,
        delivered: u >= cfg.p_drop,
        delivery_cycle: cycle + cfg.delay_cycles as u64,
    }
}

/// Single-owner broadcast channel carrying one bundle per cycle.
#[derive(Clone, Debug)]
pub struct CommBus<T> {
    cfg: CommConfig,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(u64, u64, T)>,
    log: DeliveryLog,
}

impl<T> CommBus<T> {
    pub fn new(cfg: CommConfig) -> Self {
        let rng = cfg.rng();
        CommBus {
            cfg,
            rng,
            in_flight: VecDeque::new(),
            log: DeliveryLog::default(),
        }
    }

    pub fn send(&mut self, cycle: u64, bundle: T) -> DeliveryEntry {
        let entry = transmit(cycle, &self.cfg, &mut self.rng);
        if entry.delivered {
            self.in_flight
                .push_back((entry.send_cycle, entry.delivery_cycle, bundle));
        }
        self.log.entries.push(entry);
        entry
    }

    /// The newest bundle readable at `cycle` with its send cycle; older
    /// readable bundles are discarded.
    pub fn receive(&mut self, cycle: u64) -> Option<(u64, T)> {
        let mut newest = None;
        while self
            .in_flight
            .front()
            .is_some_and(|(_, at, _)| *at <= cycle)
        {
            let (sent, _, b) = self.in_flight.pop_front().expect("checked non-empty");
            newest = Some((sent, b));
        }
        newest
    }

    pub fn log(&self) -> &DeliveryLog {
        &self.log
    }
}

/// An agent's copy of its last delivered plan.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentBuffer {
    pub plan: FrozenPlan,
    /// Last slot of `plan` the agent may run without a newer bundle.
    pub frozen_until: u64,
}

/// Command for slot `cycle`. A fresh bundle replaces the buffer. Without
/// one the buffered frozen schedule continues; past its end the agent stops
/// and reports starvation.
pub fn execute_with_fallback(
    buffer: &mut Option<AgentBuffer>,
    fresh: Option<AgentBuffer>,
    cycle: u64,
) -> (VelocityCommand, bool) {
    if let Some(f) = fresh {
        *buffer = Some(f);
    }
    match buffer {
        Some(b) if cycle <= b.frozen_until => match b.plan.command_at(cycle) {
            Some(cmd) => (cmd, false),
            None => (VelocityCommand::ZERO, true),
        },
        _ => (VelocityCommand::ZERO, true),
    }
}

/// Smallest `K_f` with `p_drop^K_f <= epsilon`; 1 when `p_drop` is zero.
pub fn required_frozen_cycles(epsilon: f64, p_drop: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter {
            name: "epsilon",
            value: epsilon,
            reason: "must lie in (0, 1)",
        });
    }
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Parameter {
            name: "p_drop",
            value: p_drop,
            reason: "must lie in [0, 1)",
        });
    }
    if p_drop == 0.0 {
        return Ok(1);
    }
    Ok(((epsilon.ln() / p_drop.ln()) - 1e-12).ceil().max(1.0) as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackoutAudit {
    /// Longest run of consecutive dropped cycles.
    pub max_streak: usize,
    /// Maximal runs longer than `K_f`.
    pub violation_count: usize,
    /// Fraction of cycles that open a window of `K_f` consecutive drops;
    /// estimates `p_drop^K_f`.
    pub empirical_violation_rate: f64,
}

pub fn blackout_audit(drops: &[bool], k_f: usize) -> BlackoutAudit {
    let mut max_streak = 0;
    let mut violation_count = 0;
    let mut run = 0;
    for &d in drops.iter().chain(std::iter::once(&false)) {
        if d {
            run += 1;
        } else {
            if run > k_f {
                violation_count += 1;
            }
            max_streak = max_streak.max(run);
            run = 0;
        }
    }
    let windows = drops.len().saturating_sub(k_f.max(1) - 1);
    let mut hits = 0usize;
    let mut run = 0usize;
    for &d in drops {
        run = if d { run + 1 } else { 0 };
        if run >= k_f.max(1) {
            hits += 1;
        }
    }
    BlackoutAudit {
        max_streak,
        violation_count,
        empirical_violation_rate: if windows == 0 {
            0.0
        } else {
            hits as f64 / windows as f64
        },
    }
}
