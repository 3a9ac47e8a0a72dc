use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::store::{SessionStore, StoreError};
use super::ServiceError;
use crate::agents::BackendSelector;
use crate::engine::{
    apply_feedback, EngineConfig, EngineError, EventBody, Feedback, FeedbackEffect, FinalAnswer,
    LayerRecord, OnExhausted, Pipeline, Query, Session, SessionStatus, TraceEvent, VerificationMode,
};
use crate::knowledge::FactStore;
use crate::scenarios::{self, ResolveError};

/// Fields a request may override on the service's default engine config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub max_layers: Option<usize>,
    pub max_refinements: Option<u32>,
    pub verification_mode: Option<VerificationMode>,
    pub on_exhausted: Option<OnExhausted>,
    pub backend: Option<BackendSelector>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut config: EngineConfig) -> EngineConfig {
        if let Some(v) = self.max_layers {
            config.max_layers = v;
        }
        if let Some(v) = self.max_refinements {
            config.max_refinements = v;
        }
        if let Some(v) = self.verification_mode {
            config.verification_mode = v;
        }
        if let Some(v) = self.on_exhausted {
            config.on_exhausted = v;
        }
        if let Some(v) = &self.backend {
            config.backend = v.clone();
        }
        config
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    /// Required unless `scenario` supplies one.
    pub query: Option<String>,
    pub domain: Option<String>,
    pub constraints: Vec<String>,
    /// Bundled scenario to script the session with.
    pub scenario: Option<String>,
    pub config: ConfigOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub created: DateTime<Utc>,
    pub query: Query,
    pub config: EngineConfig,
    pub layers: Vec<LayerRecord>,
    pub awaiting_layer: Option<usize>,
    #[serde(rename = "final")]
    pub final_answer: Option<FinalAnswer>,
    pub last_seq: u64,
    pub backend_calls: usize,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            status: s.status(),
            created: s.created,
            query: s.query.clone(),
            config: s.config.clone(),
            layers: s.layers.clone(),
            awaiting_layer: s.awaiting_layer().map(|l| l.index),
            final_answer: s.final_answer.clone(),
            last_seq: s.last_seq(),
            backend_calls: s.backend_calls(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub status: SessionStatus,
    pub created: DateTime<Utc>,
    pub query: String,
    pub awaiting_layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub effect: FeedbackEffect,
    pub session: SessionView,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResumeReport {
    pub loaded: usize,
    pub quarantined: Vec<PathBuf>,
    /// Sessions that loaded but could not be driven further, with the error.
    pub stalled: Vec<(String, String)>,
}

struct Entry {
    session: Session,
    /// Highest seq known to be on disk.
    persisted: u64,
}

/// Owns every live session. Calls into the engine block, so async callers
/// should run them on a blocking thread.
pub struct SessionManager {
    store: SessionStore,
    defaults: EngineConfig,
    facts: Arc<FactStore>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

impl std::fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionManager")
            .field("root", &self.store.root())
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

impl From<ResolveError> for ServiceError {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::UnknownScenario(_) => ServiceError::NotFound(e.to_string()),
            ResolveError::Backend(_) => ServiceError::BadRequest(e.to_string()),
            ResolveError::Scenario(_) | ResolveError::Facts { .. } => ServiceError::Internal(e.to_string()),
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl SessionManager {
    pub fn new(store: SessionStore, defaults: EngineConfig, facts: Arc<FactStore>) -> Self {
        Self {
            store,
            defaults,
            facts,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn defaults(&self) -> &EngineConfig {
        &self.defaults
    }

    fn pipeline(&self, config: &EngineConfig) -> Result<Pipeline, ServiceError> {
        Ok(scenarios::pipeline_for(&config.backend, self.facts.clone())?)
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
    }

    /// Writes events not yet on disk. On failure the in-memory session is
    /// rolled back to what the log holds.
    fn persist(&self, entry: &mut Entry) -> Result<(), ServiceError> {
        let new: Vec<TraceEvent> = entry
            .session
            .events
            .iter()
            .filter(|e| e.seq > entry.persisted)
            .cloned()
            .collect();
        match self.store.append(&entry.session.id, &new) {
            Ok(()) => {
                entry.persisted = entry.session.last_seq();
                Ok(())
            }
            Err(err) => {
                tracing::error!(session = %entry.session.id, error = %err, "persisting events failed");
                let path = self.store.path_for(&entry.session.id);
                if let Ok(session) = self.store.load(&path) {
                    entry.persisted = session.last_seq();
                    entry.session = session;
                }
                Err(err.into())
            }
        }
    }

    /// Drives the session and persists whatever it recorded, including
    /// partial progress before a backend failure.
    fn drive(&self, entry: &mut Entry) -> Result<(), ServiceError> {
        let result = self
            .pipeline(&entry.session.config)
            .and_then(|p| p.drive(&mut entry.session).map_err(|e| engine_error(&entry.session.id, e)));
        self.persist(entry)?;
        result.map(|_| ())
    }

    pub fn create(&self, request: CreateSession) -> Result<SessionView, ServiceError> {
        let mut config = self.defaults.clone();
        let mut text = request.query.clone();
        let mut domain = request.domain.clone();
        if let Some(name) = &request.scenario {
            let scenario = scenarios::bundled(name)?;
            config.backend = BackendSelector::Scripted {
                scenario: name.clone(),
            };
            text = text.or_else(|| scenario.script.query.clone());
            domain = domain.or_else(|| scenario.script.domain_tag.clone());
        }
        let config = request.config.apply(config);
        let text = text.ok_or_else(|| ServiceError::BadRequest("query is required".into()))?;
        let mut query = Query::new(text);
        if let Some(domain) = domain {
            query = query.with_domain(domain);
        }
        for c in request.constraints {
            query = query.with_constraint(c);
        }
        // resolve the backend before anything is written
        self.pipeline(&config)?;
        let session = Session::new(query, config).map_err(ServiceError::BadRequest)?;
        self.store.create(&session)?;
        let id = session.id.clone();
        let entry = Arc::new(Mutex::new(Entry {
            persisted: session.last_seq(),
            session,
        }));
        let mut guard = entry.lock().expect("session lock");
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, entry.clone());
        self.drive(&mut guard)?;
        Ok(SessionView::from(&guard.session))
    }

    pub fn feedback(&self, id: &str, mut feedback: Feedback) -> Result<FeedbackResponse, ServiceError> {
        let entry = self.entry(id)?;
        let mut guard = entry.lock().expect("session lock");
        feedback.session_id = id.to_string();
        if feedback.attempt.is_none() && repeats_last_feedback(&guard.session, &feedback) {
            return Err(ServiceError::Conflict(
                "identical to the previous feedback on this layer; include `attempt` to send it again".into(),
            ));
        }
        let effect = apply_feedback(&mut guard.session, &feedback).map_err(|e| engine_error(id, e))?;
        self.persist(&mut guard)?;
        self.drive(&mut guard)?;
        Ok(FeedbackResponse {
            effect,
            session: SessionView::from(&guard.session),
        })
    }

    pub fn get(&self, id: &str) -> Result<SessionView, ServiceError> {
        let entry = self.entry(id)?;
        let guard = entry.lock().expect("session lock");
        Ok(SessionView::from(&guard.session))
    }

    pub fn trace(&self, id: &str) -> Result<Vec<TraceEvent>, ServiceError> {
        let entry = self.entry(id)?;
        let guard = entry.lock().expect("session lock");
        Ok(guard.session.events.clone())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let entries: Vec<_> = self.sessions.read().expect("session map lock").values().cloned().collect();
        let mut out: Vec<SessionSummary> = entries
            .iter()
            .map(|e| {
                let s = &e.lock().expect("session lock").session;
                SessionSummary {
                    id: s.id.clone(),
                    status: s.status(),
                    created: s.created,
                    query: s.query.text.clone(),
                    awaiting_layer: s.awaiting_layer().map(|l| l.index),
                }
            })
            .collect();
        out.sort_by(|a, b| a.created.cmp(&b.created).then_with(|| a.id.cmp(&b.id)));
        out
    }

    /// Replays every log under the storage root. Unreadable logs are moved
    /// aside; sessions that were mid-run are driven to their next stop.
    pub fn resume_all(&self) -> Result<ResumeReport, ServiceError> {
        let mut report = ResumeReport::default();
        for path in self.store.logs()? {
            let session = match self.store.load(&path) {
                Ok(s) => s,
                Err(err) => {
                    tracing::warn!(error = %err, "quarantining unreadable session log");
                    match self.store.quarantine(&path) {
                        Ok(moved) => report.quarantined.push(moved),
                        Err(e) => tracing::error!(error = %e, "quarantine failed"),
                    }
                    continue;
                }
            };
            if self.store.path_for(&session.id) != path {
                tracing::warn!(path = %path.display(), id = %session.id, "log name does not match its session id");
                if let Ok(moved) = self.store.quarantine(&path) {
                    report.quarantined.push(moved);
                }
                continue;
            }
            let id = session.id.clone();
            let needs_drive = matches!(session.status(), SessionStatus::Created | SessionStatus::Running);
            let entry = Arc::new(Mutex::new(Entry {
                persisted: session.last_seq(),
                session,
            }));
            self.sessions
                .write()
                .expect("session map lock")
                .insert(id.clone(), entry.clone());
            report.loaded += 1;
            if needs_drive {
                let mut guard = entry.lock().expect("session lock");
                if let Err(err) = self.drive(&mut guard) {
                    tracing::warn!(session = %id, error = %err, "resumed session stalled");
                    report.stalled.push((id, err.to_string()));
                }
            }
        }
        Ok(report)
    }
}

fn repeats_last_feedback(session: &Session, feedback: &Feedback) -> bool {
    let last = session.events.iter().rev().find_map(|e| match &e.body {
        EventBody::FeedbackReceived { feedback } => Some(feedback),
        _ => None,
    });
    last.is_some_and(|last| {
        last.layer_index == feedback.layer_index
            && last.action == feedback.action
            && last.note == feedback.note
            && last.added_constraint == feedback.added_constraint
    })
}

fn engine_error(id: &str, e: EngineError) -> ServiceError {
    match e {
        EngineError::Backend(_) | EngineError::PlannerUnavailable(_) => ServiceError::Backend {
            session_id: id.to_string(),
            message: e.to_string(),
        },
        EngineError::WrongLayer { .. } | EngineError::StaleAttempt { .. } | EngineError::SessionClosed => {
            ServiceError::Conflict(e.to_string())
        }
        EngineError::InvalidFeedback(_) | EngineError::InvalidQuery(_) => ServiceError::BadRequest(e.to_string()),
        EngineError::EmptyPlan => ServiceError::Backend {
            session_id: id.to_string(),
            message: e.to_string(),
        },
        EngineError::AlreadyPlanned | EngineError::NoPlan | EngineError::NotReady | EngineError::Internal(_) => {
            ServiceError::Internal(e.to_string())
        }
    }
}
