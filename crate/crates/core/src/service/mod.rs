//! Session persistence and the HTTP API.
//!
//! Each session lives in `<root>/<session-id>.jsonl`. Events are appended
//! and synced before any mutating request returns, so a restarted service
//! picks up exactly where the last acknowledged request left it.

mod api;
mod config;
mod manager;
mod store;

pub use api::{router, serve, SimulateRequest, SimulateResponse, SweepSpec};
pub use config::{
    ConfigError, KnowledgeSection, ServerSection, ServiceConfig, DEFAULT_ADDR, DEFAULT_STORAGE_ROOT,
    STORAGE_ROOT_ENV,
};
pub use manager::{
    ConfigOverrides, CreateSession, FeedbackResponse, ResumeReport, SessionManager, SessionSummary,
    SessionView,
};
pub use store::{SessionStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    /// The session was saved up to the failure and can be resumed.
    #[error("backend failure in session {session_id}: {message}")]
    Backend { session_id: String, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            Self::BadRequest(_) => 400,
            Self::NotFound(_) => 404,
            Self::Conflict(_) => 409,
            Self::Backend { .. } => 502,
            Self::Internal(_) => 500,
        }
    }
}
