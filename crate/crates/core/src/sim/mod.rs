//! Monte Carlo scenarios: configuration, topologies, the per-step design
//! alternation, result tables and the self-check suite.

pub mod config;
pub mod output;
pub mod runner;
pub mod selfcheck;
pub mod topology;

pub use config::{DynamicsConfig, Mode, ScenarioConfig, SweepConfig, SweepParameter, TopologyConfig};
pub use output::emit_results;
pub use runner::{run_scenario, sweep, Design, RunResult, TrialTrace, DESIGNS};
pub use topology::{geometric_layout, geometric_topology, Layout};
