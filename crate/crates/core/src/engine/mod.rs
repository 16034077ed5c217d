//! Simulation: configuration, the event loop, traces and their replay.

pub mod config;
pub mod replay;
pub mod sim;
pub mod trace;

pub use config::{RunConfig, SimConfig};
pub use replay::{replay_check, ReplayReport};
pub use sim::{run, run_outcome, Outcome};
pub use trace::{Event, EventKind, IntervalSummary, Trace};
