//! Domain types and the layer-by-layer state machine.
//!
//! A session moves through: plan → for each layer (generate partial
//! reasoning → verify → accept, refine, or ask a reviewer) → integrate.
//! Every transition is an event in the session's append-only log.

mod audit;
mod event;
mod pipeline;
mod quality;
mod session;
mod types;

pub use audit::{audit, Violation};
pub use event::{read_jsonl, write_jsonl, EventBody, EventKind, LogError, TraceEvent};
pub use pipeline::{apply_feedback, EngineError, FeedbackEffect, Pipeline, StepOutcome, Verifier};
pub use quality::quality;
pub use session::{route, LayerRecord, ReplayError, Route, Session, SessionStatus};
pub use types::*;
