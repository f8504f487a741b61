//! Windowed preemptive coordinator.
//!
//! Each agent's schedule is split into slots of one control step. At the
//! cycle starting at slot `c` the slots `c .. c + K_f + d` are frozen
//! (`K_f` frozen cycles, `d` cycles of delivery delay) and never rewritten.
//! The following planning slots and the detection slot form the adjustment
//! interval. Conflicts are looked for over the look-ahead window starting at
//! the detection slot. When there are any, agents are slowed over the
//! adjustment interval in order of right of way, the one farther from its
//! goal yielding; everyone else has the intent appended unchanged.

mod conflict;
mod coordinator;
mod plan;

pub use conflict::{
    detect_conflicts, directives, preempt_adjust, settle_speeds, yielding_agent,
    AdjustmentDirective, ConflictRecord, ExternalTrack, Settlement, Windows, DEFAULT_FACTORS,
};
pub use coordinator::{
    coordinator_cycle, cycle_log_csv, planned_command, preemption_rate, Coordinator, CycleRecord,
    ProllectConfig, RightOfWay,
};
pub use plan::{snapshot_intents, FrozenPlan, IntentBuffer, IntentRecord};
