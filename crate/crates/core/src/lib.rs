//! Single-node FaaS scheduling simulator.
//!
//! Traces are turned into per-function profiles, profiles into synthetic
//! instances, and instances are replayed under a set of scheduling policies
//! on `m` identical processors. Time is kept in integer microseconds.

pub mod engine;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod par;
pub mod policy;
pub mod seed;
pub mod trace;
pub mod workload;

pub use engine::{simulate, simulate_traced, SimError, SimulationTrace};
pub use model::{CompletionRecord, FunctionId, FunctionProfile, Instance, Invocation, Micros};
pub use policy::{Policy, PolicySpec};
