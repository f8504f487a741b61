//! Reactive velocity-obstacle projection baseline.
//!
//! The controller itself only asks for the straight-to-goal command; all the
//! avoidance comes from the shared safety projection applied afterwards.

use crate::world::{nominal_command, AgentState, VelocityCommand, WorldConfig};

pub fn vo_projection_intent(agent: &AgentState, world: &WorldConfig) -> VelocityCommand {
    nominal_command(agent, world)
}
