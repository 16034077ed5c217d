//! Discrete-event simulator for phase-aware serving of agentic LLM sessions
//! on one GPU.
//!
//! Sessions alternate between a cold prefill, short decodes and resume
//! prefills that append tool output. The GPU's SMs are split into a decode
//! context and a prefill context whose sizes a TPOT feedback controller
//! adjusts every control interval. Baseline policies and latency metrics
//! live alongside it, as does a verifier for the per-interval prefill
//! competitive-ratio bound.
//!
//! ```
//! use phaseserve::{engine, metrics, scheduler::Policy, workload::Paradigm, SimConfig};
//!
//! let cfg = SimConfig::default_for(Paradigm::ReAct, 3, Policy::TpotDriven, 7).unwrap();
//! let trace = engine::run(&cfg).unwrap();
//! let summary = metrics::summarize(&trace);
//! assert_eq!(summary.sessions_done, 3);
//! ```

pub mod analysis;
pub mod engine;
pub mod error;
pub mod executor;
pub mod metrics;
pub mod profile;
pub mod scheduler;
pub mod workload;

pub use engine::{RunConfig, SimConfig, Trace};
pub use error::{ConfigError, Error, ProtocolError};
pub use profile::{Phase, ProfileBundle};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/workload.md")]
    mod workload {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/traces.md")]
    mod traces {}
    #[doc = include_str!("../../../book/src/bound.md")]
    mod bound {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
