//! Scenario harness: launches a topology of IPMFs, mock NFs and sidecars,
//! replays call scripts with or without the sidecars in the path and
//! benchmarks the difference.

pub mod bench;
pub mod launch;
pub mod runner;
pub mod script;
pub mod topology;

pub use bench::{benchmark, BenchReport};
pub use launch::{LaunchError, Topology};
pub use runner::{run_scenario, Mode, RunReport};
pub use script::Script;
pub use topology::TopologyConfig;
