//! Layered chain-of-thought orchestration.
//!
//! A query is split into layers. Each layer's partial reasoning is checked
//! against a fact store (or a human reviewer) before the next layer may
//! start; contradicted layers are refined within a fixed budget. The
//! crate also contains an error-propagation simulator comparing layered
//! and single-pass reasoning, and an HTTP service with file-backed,
//! replayable sessions.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod agents;
pub mod engine;
pub mod knowledge;
pub mod scenarios;
pub mod service;
pub mod sim;

pub use agents::{AgentRoster, Backend, BackendSelector};
pub use engine::{EngineConfig, Feedback, Pipeline, Query, Session, StepOutcome, VerificationMode};
pub use knowledge::FactStore;
