//! Deterministic multi-agent coordination simulator.
//!
//! Disc agents in a planar workspace are driven by one of four controllers
//! (velocity-obstacle projection, ORCA, best-response DMPC, and the windowed
//! preemptive coordinator in [`prollect`]). Every intended command passes
//! through the shared [`safety`] projection before integration. The
//! [`harness`] module runs seeded Monte Carlo experiments and writes CSVs;
//! [`verify`] holds executable checks of the protocol's timing, feasibility,
//! blackout and stability properties.

pub mod comms;
pub mod controllers;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hierarchy;
pub mod metrics;
pub mod prollect;
pub mod safety;
pub mod timing;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{Rect, Vec2};
pub use world::{AgentState, TimingConfig, VelocityCommand, WorldConfig};
