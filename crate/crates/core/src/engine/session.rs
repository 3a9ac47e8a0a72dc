//! The event-sourced session.
//!
//! A [`Session`] is never mutated directly. The engine appends
//! [`EventBody`] values through [`Session::append`], and every field of the
//! session is the result of folding those events with [`Session::apply`].
//! [`Session::replay`] performs the same fold over a stored log, so a
//! replayed session serializes to exactly the same bytes as the live one.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::event::{EventBody, TraceEvent};
use super::types::{
    Aggregate, ClaimStatus, EngineConfig, FeedbackAction, FinalAnswer, LayerPlan, LayerState,
    PartialReasoning, Query, VerificationMode, VerificationVerdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub index: usize,
    pub objective: String,
    pub state: LayerState,
    /// Attempt number of the latest partial reasoning, 0 before the first.
    pub attempt: u32,
    pub refinements: u32,
    pub partial: Option<PartialReasoning>,
    pub verdict: Option<VerificationVerdict>,
    /// Reviewer note waiting to be fed into the next refinement.
    pub pending_note: Option<String>,
    pub approved: bool,
    pub flagged: bool,
}

impl LayerRecord {
    fn new(index: usize, objective: String) -> Self {
        Self {
            index,
            objective,
            state: LayerState::Pending,
            attempt: 0,
            refinements: 0,
            partial: None,
            verdict: None,
            pending_note: None,
            approved: false,
            flagged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionStatus {
    /// Created but not yet planned.
    Created,
    Running,
    AwaitingUser,
    Finished,
    Failed,
}

impl SessionStatus {
    pub fn is_closed(self) -> bool {
        matches!(self, Self::Finished | Self::Failed)
    }
}

/// What the engine does with a layer once its verdict is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Accept,
    Refine,
    AskUser,
    Exhausted,
}

/// Pure routing rule shared by [`Session::apply`] and the engine.
pub fn route(mode: VerificationMode, verdict: &VerificationVerdict) -> Route {
    match mode {
        VerificationMode::Automatic | VerificationMode::Vanilla => match verdict.aggregate {
            Aggregate::Accepted => Route::Accept,
            Aggregate::NeedsRefinement => Route::Refine,
            Aggregate::Rejected => Route::Exhausted,
        },
        VerificationMode::Interactive => Route::AskUser,
        VerificationMode::Hybrid => {
            let all_supported = !verdict.per_claim.is_empty()
                && verdict
                    .per_claim
                    .values()
                    .all(|s| *s == ClaimStatus::Supported);
            if all_supported {
                Route::Accept
            } else {
                Route::AskUser
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("first event must be Created, found {0:?}")]
    MissingHeader(super::event::EventKind),
    #[error("event seq {found} does not follow {previous}")]
    OutOfOrder { previous: u64, found: u64 },
    #[error("seq {seq}: {message}")]
    Invalid { seq: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created: DateTime<Utc>,
    pub query: Query,
    pub config: EngineConfig,
    pub plan: Option<LayerPlan>,
    pub layers: Vec<LayerRecord>,
    #[serde(rename = "final")]
    pub final_answer: Option<FinalAnswer>,
    pub failed: bool,
    pub events: Vec<TraceEvent>,
}

impl Session {
    /// Starts a session with a freshly generated id.
    pub fn new(query: Query, config: EngineConfig) -> Result<Self, String> {
        Self::with_id(uuid::Uuid::new_v4().to_string(), query, config)
    }

    pub fn with_id(id: impl Into<String>, query: Query, config: EngineConfig) -> Result<Self, String> {
        query.validate()?;
        config.validate()?;
        let header = TraceEvent {
            seq: 1,
            ts: Utc::now(),
            body: EventBody::Created {
                session_id: id.into(),
                query,
                config,
            },
        };
        Self::from_header(header).map_err(|e| e.to_string())
    }

    fn from_header(event: TraceEvent) -> Result<Self, ReplayError> {
        let EventBody::Created {
            session_id,
            query,
            config,
        } = &event.body
        else {
            return Err(ReplayError::MissingHeader(event.kind()));
        };
        Ok(Self {
            id: session_id.clone(),
            created: event.ts,
            query: query.clone(),
            config: config.clone(),
            plan: None,
            layers: Vec::new(),
            final_answer: None,
            failed: false,
            events: vec![event],
        })
    }

    /// Rebuilds a session from its event log.
    pub fn replay<I>(events: I) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = TraceEvent>,
    {
        let mut events = events.into_iter();
        let header = events.next().ok_or(ReplayError::Empty)?;
        let mut session = Self::from_header(header)?;
        for event in events {
            let previous = session.last_seq();
            if event.seq != previous + 1 {
                return Err(ReplayError::OutOfOrder {
                    previous,
                    found: event.seq,
                });
            }
            session.apply(&event.body).map_err(|message| ReplayError::Invalid {
                seq: event.seq,
                message,
            })?;
            session.events.push(event);
        }
        Ok(session)
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    /// Validates and applies an event, then records it in the log.
    pub fn append(&mut self, body: EventBody) -> Result<&TraceEvent, String> {
        self.apply(&body)?;
        let event = TraceEvent {
            seq: self.last_seq() + 1,
            ts: Utc::now(),
            body,
        };
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    pub fn status(&self) -> SessionStatus {
        if self.final_answer.is_some() {
            SessionStatus::Finished
        } else if self.failed {
            SessionStatus::Failed
        } else if self.layers.iter().any(|l| l.state == LayerState::AwaitingUser) {
            SessionStatus::AwaitingUser
        } else if self.plan.is_none() {
            SessionStatus::Created
        } else {
            SessionStatus::Running
        }
    }

    /// The first layer that is not yet accepted.
    pub fn current_layer(&self) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.state != LayerState::Accepted)
    }

    pub fn awaiting_layer(&self) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.state == LayerState::AwaitingUser)
    }

    pub fn all_accepted(&self) -> bool {
        !self.layers.is_empty() && self.layers.iter().all(|l| l.state == LayerState::Accepted)
    }

    /// Number of backend calls recorded in the trace.
    pub fn backend_calls(&self) -> usize {
        self.events.iter().filter(|e| e.body.is_backend_call()).count()
    }

    fn layer_mut(&mut self, index: usize) -> Result<&mut LayerRecord, String> {
        self.layers
            .get_mut(index)
            .ok_or_else(|| format!("layer {index} does not exist"))
    }

    fn expect_state(&self, index: usize, allowed: &[LayerState]) -> Result<(), String> {
        let layer = self
            .layers
            .get(index)
            .ok_or_else(|| format!("layer {index} does not exist"))?;
        if allowed.contains(&layer.state) {
            Ok(())
        } else {
            Err(format!(
                "layer {index} is {:?}, expected one of {allowed:?}",
                layer.state
            ))
        }
    }

    /// The fold step. Rejects events that are not legal in the current state.
    pub fn apply(&mut self, body: &EventBody) -> Result<(), String> {
        if self.final_answer.is_some() || self.failed {
            return Err("session is closed".into());
        }
        let vanilla = self.config.verification_mode == VerificationMode::Vanilla;
        match body {
            EventBody::Created { .. } => return Err("duplicate Created event".into()),
            EventBody::Planned { plan } => {
                if vanilla {
                    return Err("vanilla sessions are not planned".into());
                }
                if self.plan.is_some() {
                    return Err("session is already planned".into());
                }
                plan.validate(self.config.max_layers)?;
                self.layers = plan
                    .sub_problems
                    .iter()
                    .map(|sp| LayerRecord::new(sp.index, sp.objective.clone()))
                    .collect();
                self.layers[0].state = LayerState::Reasoning;
                self.plan = Some(plan.clone());
            }
            EventBody::PartialGenerated { .. } if vanilla => {
                if self.events.iter().any(|e| e.body.is_backend_call()) {
                    return Err("vanilla sessions make a single reasoning call".into());
                }
            }
            EventBody::PartialGenerated { partial, .. } => {
                let i = partial.layer_index;
                self.expect_state(i, &[LayerState::Reasoning])?;
                let layer = self.layer_mut(i)?;
                if partial.attempt != layer.refinements + 1 {
                    return Err(format!(
                        "layer {i} attempt {} does not follow {} refinements",
                        partial.attempt, layer.refinements
                    ));
                }
                layer.attempt = partial.attempt;
                layer.partial = Some(partial.clone());
                layer.verdict = None;
                layer.approved = false;
                layer.state = LayerState::AwaitingVerification;
            }
            EventBody::Refined { partial, .. } => {
                let i = partial.layer_index;
                self.expect_state(i, &[LayerState::Refining])?;
                let max = self.config.max_refinements;
                let layer = self.layer_mut(i)?;
                if layer.refinements >= max {
                    return Err(format!("layer {i} refinement budget {max} is spent"));
                }
                if partial.attempt != layer.attempt + 1 {
                    return Err(format!(
                        "refined attempt {} does not follow attempt {}",
                        partial.attempt, layer.attempt
                    ));
                }
                layer.refinements += 1;
                layer.attempt = partial.attempt;
                layer.partial = Some(partial.clone());
                layer.verdict = None;
                layer.pending_note = None;
                layer.approved = false;
                layer.state = LayerState::AwaitingVerification;
            }
            EventBody::VerdictRecorded { verdict } => {
                let i = verdict.layer_index;
                self.expect_state(i, &[LayerState::AwaitingVerification])?;
                if verdict.aggregate == Aggregate::Accepted && verdict.has_contradiction() {
                    return Err("accepted verdict with a contradicted claim".into());
                }
                let mode = self.config.verification_mode;
                let layer = self.layer_mut(i)?;
                let partial = layer.partial.as_ref().ok_or("verdict without partial")?;
                let ids_match = partial.claims.len() == verdict.per_claim.len()
                    && partial
                        .claims
                        .iter()
                        .all(|c| verdict.per_claim.contains_key(&c.id));
                if !ids_match {
                    return Err(format!("verdict for layer {i} does not cover its claims"));
                }
                layer.verdict = Some(verdict.clone());
                match route(mode, verdict) {
                    Route::Refine => layer.state = LayerState::Refining,
                    Route::AskUser => layer.state = LayerState::AwaitingUser,
                    // Settled by the LayerAccepted / LayerFailed event that follows.
                    Route::Accept | Route::Exhausted => {}
                }
            }
            EventBody::FeedbackReceived { feedback } => {
                let i = feedback.layer_index;
                self.expect_state(i, &[LayerState::AwaitingUser])?;
                feedback.validate()?;
                if let Some(c) = feedback.added_constraint.as_deref() {
                    if !c.trim().is_empty() {
                        self.query.constraints.push(c.trim().to_string());
                    }
                }
                let max = self.config.max_refinements;
                let layer = self.layer_mut(i)?;
                match feedback.action {
                    FeedbackAction::Approve => layer.approved = true,
                    FeedbackAction::Reject if layer.refinements < max => {
                        layer.pending_note = feedback.note.clone();
                        layer.state = LayerState::Refining;
                    }
                    // Budget spent; a LayerFailed event follows.
                    FeedbackAction::Reject => {}
                    FeedbackAction::Annotate => layer.state = LayerState::Reasoning,
                }
            }
            EventBody::LayerAccepted {
                layer_index,
                flagged,
                ..
            } => {
                let i = *layer_index;
                let mode = self.config.verification_mode;
                let layer = self
                    .layers
                    .get(i)
                    .ok_or_else(|| format!("layer {i} does not exist"))?;
                let ok = match layer.state {
                    LayerState::AwaitingUser => layer.approved,
                    LayerState::AwaitingVerification => match &layer.verdict {
                        Some(v) => match route(mode, v) {
                            Route::Accept => !flagged,
                            Route::Exhausted => *flagged,
                            _ => false,
                        },
                        None => false,
                    },
                    _ => false,
                };
                if !ok {
                    return Err(format!("layer {i} cannot be accepted from {:?}", layer.state));
                }
                let layer = self.layer_mut(i)?;
                layer.state = LayerState::Accepted;
                layer.flagged = *flagged;
                if let Some(next) = self.layers.get_mut(i + 1) {
                    next.state = LayerState::Reasoning;
                }
            }
            EventBody::LayerFailed { layer_index, .. } => {
                let i = *layer_index;
                self.expect_state(
                    i,
                    &[
                        LayerState::AwaitingVerification,
                        LayerState::AwaitingUser,
                        LayerState::Refining,
                        LayerState::Reasoning,
                    ],
                )?;
                self.layer_mut(i)?.state = LayerState::Failed;
                self.failed = true;
            }
            EventBody::Integrated { answer } => {
                if !vanilla && !self.all_accepted() {
                    return Err("integration before every layer is accepted".into());
                }
                if !(0.0..=1.0).contains(&answer.quality) {
                    return Err(format!("quality {} outside [0, 1]", answer.quality));
                }
                self.final_answer = Some(answer.clone());
            }
        }
        Ok(())
    }
}
