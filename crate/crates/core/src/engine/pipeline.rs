use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::event::{EventBody, TraceEvent};
use super::quality::quality;
use super::session::{route, Route, Session, SessionStatus};
use super::types::{
    EngineConfig, Feedback, FeedbackAction, FinalAnswer, LayerPlan, LayerState, OnExhausted,
    PartialReasoning, Query, VerdictPolicy, VerdictSource, VerificationMode, VerificationVerdict,
};
use crate::agents::{
    self, parse_claims, parse_plan, render_prompt, strip_claims, AgentError, AgentRequest,
    AgentRoster, PromptContext, PromptSet, Step,
};

/// Checks a layer's partial reasoning. The fact store is the shipped
/// implementation; an LLM judge would implement this too and report
/// `VerdictSource::Agent`.
pub trait Verifier: Send + Sync {
    fn verify(&self, partial: &PartialReasoning, policy: VerdictPolicy) -> VerificationVerdict;
}

impl<V: Verifier + ?Sized> Verifier for Arc<V> {
    fn verify(&self, partial: &PartialReasoning, policy: VerdictPolicy) -> VerificationVerdict {
        (**self).verify(partial, policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    Progressed,
    AwaitingUser,
    Finished,
    Failed,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("planner unavailable: {0}")]
    PlannerUnavailable(AgentError),
    #[error("planner produced no sub-problems")]
    EmptyPlan,
    #[error("session is already planned")]
    AlreadyPlanned,
    #[error("session has no plan")]
    NoPlan,
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("feedback addresses layer {got}, but {expected}")]
    WrongLayer { expected: String, got: usize },
    #[error("feedback is for attempt {got}, layer is at attempt {current}")]
    StaleAttempt { current: u32, got: u32 },
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("not every layer is accepted")]
    NotReady,
    /// The engine tried to record an event its own state machine rejects.
    #[error("internal state error: {0}")]
    Internal(String),
}

fn record(session: &mut Session, body: EventBody) -> Result<(), EngineError> {
    session.append(body).map(|_| ()).map_err(EngineError::Internal)
}

/// What a piece of feedback did to its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEffect {
    pub layer_index: usize,
    pub action: FeedbackAction,
    pub state_after: LayerState,
}

/// Applies reviewer feedback to the layer awaiting it.
///
/// Approve accepts the layer. Reject sends it to refinement with the note,
/// or fails it when no refinement is left. Annotate sends it back to
/// reasoning. Any `added_constraint` is appended to the query first.
pub fn apply_feedback(session: &mut Session, feedback: &Feedback) -> Result<FeedbackEffect, EngineError> {
    if session.status().is_closed() {
        return Err(EngineError::SessionClosed);
    }
    if !feedback.session_id.is_empty() && feedback.session_id != session.id {
        return Err(EngineError::InvalidFeedback(format!(
            "feedback is for session {}",
            feedback.session_id
        )));
    }
    let awaiting = session.awaiting_layer().map(|l| (l.index, l.attempt));
    let Some((index, attempt)) = awaiting.filter(|(i, _)| *i == feedback.layer_index) else {
        return Err(EngineError::WrongLayer {
            expected: match awaiting {
                Some((i, _)) => format!("layer {i} is the one awaiting input"),
                None => "no layer is awaiting input".into(),
            },
            got: feedback.layer_index,
        });
    };
    if let Some(got) = feedback.attempt {
        if got != attempt {
            return Err(EngineError::StaleAttempt { current: attempt, got });
        }
    }
    feedback.validate().map_err(EngineError::InvalidFeedback)?;

    record(
        session,
        EventBody::FeedbackReceived {
            feedback: Feedback {
                session_id: session.id.clone(),
                ..feedback.clone()
            },
        },
    )?;
    match feedback.action {
        FeedbackAction::Approve => record(
            session,
            EventBody::LayerAccepted {
                layer_index: index,
                source: VerdictSource::User,
                flagged: false,
            },
        )?,
        FeedbackAction::Reject if session.layers[index].state != LayerState::Refining => record(
            session,
            EventBody::LayerFailed {
                layer_index: index,
                reason: "rejected by reviewer with no refinement left".into(),
            },
        )?,
        FeedbackAction::Reject | FeedbackAction::Annotate => {}
    }
    Ok(FeedbackEffect {
        layer_index: index,
        action: feedback.action,
        state_after: session.layers[index].state,
    })
}

/// Drives sessions: plans them, advances layers, integrates the answer.
#[derive(Clone)]
pub struct Pipeline {
    agents: AgentRoster,
    verifier: Arc<dyn Verifier>,
    prompts: PromptSet,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("agents", &self.agents).finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(agents: AgentRoster, verifier: Arc<dyn Verifier>) -> Self {
        Self {
            agents,
            verifier,
            prompts: PromptSet::default(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn agents(&self) -> &AgentRoster {
        &self.agents
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    fn context(&self, session: &Session, objective: Option<String>) -> PromptContext {
        let prior_layers = session
            .layers
            .iter()
            .filter(|l| l.state == LayerState::Accepted)
            .filter_map(|l| {
                l.partial
                    .as_ref()
                    .map(|p| (l.objective.clone(), p.narrative.clone()))
            })
            .collect();
        PromptContext {
            query: session.query.text.clone(),
            constraints: session.query.constraints.clone(),
            objective,
            prior_layers,
            rejection_note: None,
        }
    }

    /// Asks the planner for sub-problems and records the plan.
    ///
    /// The plan is truncated to `max_layers`. With `max_layers == 1` the
    /// single layer is the whole query; the planner is still consulted so
    /// every session pays the same fixed call overhead.
    pub fn plan_layers(&self, session: &mut Session) -> Result<LayerPlan, EngineError> {
        if session.status().is_closed() {
            return Err(EngineError::SessionClosed);
        }
        if session.plan.is_some() {
            return Err(EngineError::AlreadyPlanned);
        }
        let config = &session.config;
        let prompt = render_prompt(&self.prompts.plan, &self.context(session, None))?;
        let request = AgentRequest {
            role: Step::Plan.role(),
            step: Step::Plan,
            layer: None,
            attempt: 1,
            prompt,
        };
        let text = self.agents.call(&request).map_err(|e| match e {
            AgentError::EmptyResponse { .. } => EngineError::EmptyPlan,
            other => EngineError::PlannerUnavailable(other),
        })?;
        let objectives = parse_plan(&text);
        if objectives.is_empty() {
            return Err(EngineError::EmptyPlan);
        }
        let sources = config.verification_mode.sources();
        let plan = if config.max_layers == 1 {
            LayerPlan::from_objectives([session.query.text.clone()], 1, &sources)
        } else {
            LayerPlan::from_objectives(objectives, config.max_layers, &sources)
        };
        record(session, EventBody::Planned { plan: plan.clone() })?;
        Ok(plan)
    }

    /// Executes one step on the current layer.
    ///
    /// A step generates (or refines) the layer's partial reasoning, records
    /// its verdict and routes the layer: accepted, back to refinement, to a
    /// reviewer, or failed. Once every layer is accepted the next step
    /// integrates the final answer. A backend failure leaves the session
    /// unchanged and resumable.
    pub fn advance(&self, session: &mut Session) -> Result<StepOutcome, EngineError> {
        match session.status() {
            SessionStatus::Finished | SessionStatus::Failed => return Err(EngineError::SessionClosed),
            SessionStatus::AwaitingUser => return Ok(StepOutcome::AwaitingUser),
            SessionStatus::Created | SessionStatus::Running => {}
        }
        if session.config.verification_mode == VerificationMode::Vanilla {
            self.advance_vanilla(session)?;
            return Ok(StepOutcome::Finished);
        }
        if session.plan.is_none() {
            return Err(EngineError::NoPlan);
        }
        if session.all_accepted() {
            self.integrate(session)?;
            return Ok(StepOutcome::Finished);
        }
        let layer = session.current_layer().expect("some layer is not accepted").clone();
        let sub_problem = session.plan.as_ref().expect("planned").sub_problems[layer.index].clone();
        match layer.state {
            LayerState::Reasoning => {
                let context = self.context(session, None);
                let attempt = layer.refinements + 1;
                let (partial, warnings) =
                    agents::generate_partial(&sub_problem, &context, attempt, &self.prompts, &self.agents)?;
                record(session, EventBody::PartialGenerated { partial, warnings })?;
            }
            LayerState::Refining => {
                let previous = layer.partial.as_ref().ok_or_else(|| {
                    EngineError::Internal(format!("layer {} refining without a partial", layer.index))
                })?;
                let context = self.context(session, None);
                let (partial, warnings) = agents::refine_partial(
                    &sub_problem,
                    previous,
                    layer.verdict.as_ref(),
                    layer.pending_note.as_deref(),
                    &context,
                    session.config.max_refinements,
                    &self.prompts,
                    &self.agents,
                )?;
                record(
                    session,
                    EventBody::Refined {
                        partial,
                        note: layer.pending_note.clone(),
                        warnings,
                    },
                )?;
            }
            LayerState::AwaitingVerification => {}
            other => {
                return Err(EngineError::Internal(format!(
                    "current layer {} is {other:?}",
                    layer.index
                )))
            }
        }
        self.verify_and_route(session, layer.index)
    }

    fn verify_and_route(&self, session: &mut Session, index: usize) -> Result<StepOutcome, EngineError> {
        let layer = &session.layers[index];
        let verdict = match &layer.verdict {
            Some(v) => v.clone(),
            None => {
                let partial = layer.partial.as_ref().ok_or_else(|| {
                    EngineError::Internal(format!("layer {index} has nothing to verify"))
                })?;
                let policy = VerdictPolicy::for_attempt(&session.config, partial.attempt);
                let verdict = self.verifier.verify(partial, policy);
                record(session, EventBody::VerdictRecorded { verdict: verdict.clone() })?;
                verdict
            }
        };
        match route(session.config.verification_mode, &verdict) {
            Route::Accept => {
                record(
                    session,
                    EventBody::LayerAccepted {
                        layer_index: index,
                        source: verdict.source,
                        flagged: false,
                    },
                )?;
                Ok(StepOutcome::Progressed)
            }
            Route::Refine => Ok(StepOutcome::Progressed),
            Route::AskUser => Ok(StepOutcome::AwaitingUser),
            Route::Exhausted => match session.config.on_exhausted {
                OnExhausted::FailSession => {
                    record(
                        session,
                        EventBody::LayerFailed {
                            layer_index: index,
                            reason: format!(
                                "contradiction persists after {} refinements",
                                session.layers[index].refinements
                            ),
                        },
                    )?;
                    Ok(StepOutcome::Failed)
                }
                OnExhausted::AcceptFlagged => {
                    record(
                        session,
                        EventBody::LayerAccepted {
                            layer_index: index,
                            source: verdict.source,
                            flagged: true,
                        },
                    )?;
                    Ok(StepOutcome::Progressed)
                }
            },
        }
    }

    /// Combines the accepted layers into the final answer.
    pub fn integrate(&self, session: &mut Session) -> Result<FinalAnswer, EngineError> {
        if session.status().is_closed() {
            return Err(EngineError::SessionClosed);
        }
        if !session.all_accepted() {
            return Err(EngineError::NotReady);
        }
        let prompt = render_prompt(&self.prompts.integrate, &self.context(session, None))?;
        let request = AgentRequest {
            role: Step::Integrate.role(),
            step: Step::Integrate,
            layer: None,
            attempt: 1,
            prompt,
        };
        let text = self.agents.call(&request)?;
        let answer = FinalAnswer {
            text: text.trim().to_string(),
            supporting_layers: session.layers.iter().map(|l| l.index).collect(),
            quality: quality(&session.events),
        };
        record(session, EventBody::Integrated { answer: answer.clone() })?;
        Ok(answer)
    }

    fn vanilla_chain(&self, query: &Query) -> Result<(PartialReasoning, Vec<String>, FinalAnswer), EngineError> {
        let context = PromptContext {
            query: query.text.clone(),
            constraints: query.constraints.clone(),
            ..Default::default()
        };
        let prompt = render_prompt(&self.prompts.vanilla, &context)?;
        let request = AgentRequest {
            role: Step::Vanilla.role(),
            step: Step::Vanilla,
            layer: None,
            attempt: 1,
            prompt,
        };
        let narrative = self.agents.call(&request)?;
        let parsed = parse_claims(&narrative);
        let answer = FinalAnswer {
            text: strip_claims(&narrative),
            supporting_layers: Vec::new(),
            quality: 0.0,
        };
        let partial = PartialReasoning {
            layer_index: 0,
            narrative,
            claims: parsed.claims,
            attempt: 1,
        };
        Ok((partial, parsed.warnings, answer))
    }

    fn advance_vanilla(&self, session: &mut Session) -> Result<(), EngineError> {
        let (partial, warnings, mut answer) = self.vanilla_chain(&session.query)?;
        record(session, EventBody::PartialGenerated { partial, warnings })?;
        answer.quality = quality(&session.events);
        record(session, EventBody::Integrated { answer })
    }

    /// Single unverified reasoning pass, the baseline. Returns the answer and
    /// a two-event trace (the chain and its answer) with no verdicts.
    pub fn run_vanilla(&self, query: &Query) -> Result<(FinalAnswer, Vec<TraceEvent>), EngineError> {
        query.validate().map_err(EngineError::InvalidQuery)?;
        let (partial, warnings, mut answer) = self.vanilla_chain(query)?;
        let now = chrono::Utc::now();
        let mut trace = vec![TraceEvent {
            seq: 1,
            ts: now,
            body: EventBody::PartialGenerated { partial, warnings },
        }];
        answer.quality = quality(&trace);
        trace.push(TraceEvent {
            seq: 2,
            ts: now,
            body: EventBody::Integrated {
                answer: answer.clone(),
            },
        });
        Ok((answer, trace))
    }

    /// Plans if needed, then advances until the session finishes, fails or
    /// waits for a reviewer.
    pub fn drive(&self, session: &mut Session) -> Result<StepOutcome, EngineError> {
        loop {
            match session.status() {
                SessionStatus::Finished => return Ok(StepOutcome::Finished),
                SessionStatus::Failed => return Ok(StepOutcome::Failed),
                SessionStatus::AwaitingUser => return Ok(StepOutcome::AwaitingUser),
                SessionStatus::Created
                    if session.config.verification_mode != VerificationMode::Vanilla =>
                {
                    self.plan_layers(session)?;
                }
                SessionStatus::Created | SessionStatus::Running => {
                    self.advance(session)?;
                }
            }
        }
    }

    /// Creates a session for `query` and drives it to its first stopping point.
    pub fn start(&self, query: Query, config: EngineConfig) -> Result<(Session, StepOutcome), EngineError> {
        let mut session = Session::new(query, config).map_err(EngineError::InvalidQuery)?;
        let outcome = self.drive(&mut session)?;
        Ok((session, outcome))
    }
}
