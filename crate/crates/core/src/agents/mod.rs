//! Agent roles, prompt rendering, claim extraction and the backends that
//! produce text for the engine.
//!
//! A [`Backend`] turns an [`AgentRequest`] into text. Three kinds ship
//! with the crate: [`ScriptedBackend`] replays fixture responses,
//! [`HttpChatBackend`] talks to an OpenAI-compatible chat completion
//! endpoint, and the doubles in [`doubles`] exist for tests.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

mod claims;
pub mod doubles;
mod http;
mod prompt;
mod reasoner;
mod scripted;

pub use claims::{parse_claims, parse_plan, render_claims, strip_claims, ParsedClaims};
pub use http::{ChatBackendConfig, HttpChatBackend};
pub use prompt::{render_prompt, PromptContext, PromptSet, PromptTemplate};
pub use reasoner::{generate_partial, refine_partial, revision_notes};
pub use scripted::{ResponseKey, ScenarioError, ScriptedBackend, ScriptedScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleKind {
    Planner,
    Reasoner,
    Verifier,
    Retriever,
    UserProxy,
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Pipeline step a request belongs to. Refinements are `Partial` requests
/// with `attempt > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Plan,
    Partial,
    Integrate,
    Vanilla,
}

impl Step {
    pub fn role(self) -> RoleKind {
        match self {
            Self::Plan => RoleKind::Planner,
            Self::Partial | Self::Integrate | Self::Vanilla => RoleKind::Reasoner,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Plan => "plan",
            Self::Partial => "partial",
            Self::Integrate => "integrate",
            Self::Vanilla => "vanilla",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub role: RoleKind,
    pub step: Step,
    pub layer: Option<usize>,
    pub attempt: u32,
    pub prompt: String,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0}s")]
    Timeout(u64),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("environment variable `{0}` holding the API token is not set")]
    MissingToken(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{role} returned an empty response for step {step}")]
    EmptyResponse { role: RoleKind, step: Step },
    #[error("placeholder `{{{0}}}` has no value")]
    UnboundPlaceholder(String),
    #[error("layer {layer} already used attempt {attempt}, the last one allowed")]
    BudgetExhausted { layer: usize, attempt: u32 },
    #[error("no backend is assigned to role {0}")]
    NoHandle(RoleKind),
}

/// Something that answers prompts. Implementations must be stateless
/// between requests and safe to call from several sessions at once.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError>;

    fn describe(&self) -> String {
        std::any::type_name::<Self>().to_string()
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Which backend a session uses. Stored in the session header so a
/// resumed session rebuilds the same backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSelector {
    /// Echoes the prompt back.
    #[default]
    Echo,
    Scripted {
        scenario: String,
    },
    Http(ChatBackendConfig),
}

/// Role → backend assignment for one session.
#[derive(Clone, Default)]
pub struct AgentRoster {
    handles: BTreeMap<RoleKind, Arc<dyn Backend>>,
}

impl AgentRoster {
    /// One backend serving every text-producing role.
    pub fn shared(backend: Arc<dyn Backend>) -> Self {
        Self::default()
            .with(RoleKind::Planner, backend.clone())
            .with(RoleKind::Reasoner, backend)
    }

    pub fn with(mut self, role: RoleKind, backend: Arc<dyn Backend>) -> Self {
        self.handles.insert(role, backend);
        self
    }

    pub fn get(&self, role: RoleKind) -> Result<&Arc<dyn Backend>, AgentError> {
        self.handles.get(&role).ok_or(AgentError::NoHandle(role))
    }

    pub fn roles(&self) -> impl Iterator<Item = RoleKind> + '_ {
        self.handles.keys().copied()
    }

    /// Sends a request to the backend for `request.role` and rejects blank
    /// responses.
    pub fn call(&self, request: &AgentRequest) -> Result<String, AgentError> {
        let text = self.get(request.role)?.complete(request)?;
        if text.trim().is_empty() {
            return Err(AgentError::EmptyResponse {
                role: request.role,
                step: request.step,
            });
        }
        Ok(text)
    }
}

impl fmt::Debug for AgentRoster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.handles.iter().map(|(r, b)| (r, b.describe())))
            .finish()
    }
}
