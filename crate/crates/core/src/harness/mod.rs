//! Scenarios, the simulation loop, Monte Carlo execution and experiment
//! suites with their CSV outputs.

mod run;
mod scenario;
mod suites;

pub use run::{run_single, run_with_trace, ExperimentConfig, RunTrace};
pub use scenario::{build_scenario, Scenario, ScenarioKind, ScenarioParams, ScenarioSpec};
pub use suites::*;
