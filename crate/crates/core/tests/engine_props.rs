mod common;

use std::sync::Arc;

use common::{fault_pipeline, random_run, FaultBackend};
use layercot::agents::doubles::{CountingBackend, FailingBackend, FixedBackend};
use layercot::agents::{AgentRoster, Backend, BackendError, Step};
use layercot::engine::{
    apply_feedback, audit, quality, EngineConfig, EngineError, EventKind, Feedback, LayerState,
    OnExhausted, Pipeline, Query, Session, SessionStatus, StepOutcome, VerdictSource,
    VerificationMode,
};
use layercot::knowledge::FactStore;
use layercot::scenarios;
use proptest::prelude::*;

fn kinds(session: &Session) -> Vec<EventKind> {
    session.events.iter().map(|e| e.kind()).collect()
}

fn count(session: &Session, kind: EventKind) -> usize {
    session.events.iter().filter(|e| e.kind() == kind).count()
}

fn automatic(layers: usize, refinements: u32) -> EngineConfig {
    EngineConfig::default()
        .with_max_layers(layers)
        .with_max_refinements(refinements)
}

#[test]
fn first_step_accepts_supported_layer() {
    let pipeline = scenarios::bundled("algorithm-x").unwrap().pipeline();
    let mut session = Session::new(Query::new("q"), EngineConfig::default()).unwrap();
    pipeline.plan_layers(&mut session).unwrap();
    assert_eq!(session.layers[0].state, LayerState::Reasoning);
    assert_eq!(pipeline.advance(&mut session).unwrap(), StepOutcome::Progressed);
    assert_eq!(session.layers[0].state, LayerState::Accepted);
    assert_eq!(session.layers[1].state, LayerState::Reasoning);
}

#[test]
fn two_layer_trace_shape() {
    let s = scenarios::bundled("algorithm-x").unwrap();
    let (session, outcome) = s.pipeline().start(s.query(), EngineConfig::default()).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
    assert_eq!(
        kinds(&session),
        vec![
            EventKind::Created,
            EventKind::Planned,
            EventKind::PartialGenerated,
            EventKind::VerdictRecorded,
            EventKind::LayerAccepted,
            EventKind::PartialGenerated,
            EventKind::VerdictRecorded,
            EventKind::LayerAccepted,
            EventKind::Integrated,
        ]
    );
    assert!(audit(&session).is_empty());
}

#[test]
fn fresh_session_has_only_its_header() {
    let session = Session::new(Query::new("q"), EngineConfig::default()).unwrap();
    assert_eq!(kinds(&session), vec![EventKind::Created]);
    assert_eq!(session.status(), SessionStatus::Created);
}

#[test]
fn vanilla_records_no_verdicts() {
    let s = scenarios::bundled("medical-triage").unwrap();
    let config = EngineConfig::default().with_mode(VerificationMode::Vanilla);
    let (session, outcome) = s.pipeline().start(s.query(), config).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
    assert_eq!(count(&session, EventKind::VerdictRecorded), 0);
    assert!(session.final_answer.unwrap().text.contains("rest and hydration suffice"));

    let (answer, trace) = s.pipeline().run_vanilla(&s.query()).unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(answer.quality, 0.0);
}

#[test]
fn contradiction_is_refined_before_the_next_layer() {
    let s = scenarios::bundled("financial-risk").unwrap();
    let (session, _) = s.pipeline().start(s.query(), EngineConfig::default()).unwrap();
    let k = kinds(&session);
    let refined = k.iter().position(|k| *k == EventKind::Refined).unwrap();
    let second_layer = session
        .events
        .iter()
        .position(|e| e.kind() == EventKind::PartialGenerated && e.body.layer() == Some(1))
        .unwrap();
    assert!(refined < second_layer);
    assert_eq!(session.layers[0].refinements, 1);
    assert_eq!(session.layers[0].attempt, 2);
}

#[test]
fn exhausted_budget_fails_or_flags() {
    // every attempt on layer 1 is contradicted
    let backend = FaultBackend::new(3, 2, 1.0, 1.0, 0.0);
    let pipeline = fault_pipeline(backend);
    let (session, outcome) = pipeline.start(Query::new("q"), automatic(2, 1)).unwrap();
    assert_eq!(outcome, StepOutcome::Failed);
    assert_eq!(session.status(), SessionStatus::Failed);
    assert_eq!(session.layers[0].state, LayerState::Failed);
    assert_eq!(session.layers[0].refinements, 1);
    assert_eq!(session.layers[1].state, LayerState::Pending);
    assert!(audit(&session).is_empty());

    let pipeline = fault_pipeline(FaultBackend::new(3, 2, 1.0, 1.0, 0.0));
    let config = automatic(2, 1).with_on_exhausted(OnExhausted::AcceptFlagged);
    let (session, outcome) = pipeline.start(Query::new("q"), config).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
    assert!(session.layers.iter().all(|l| l.flagged));
}

#[test]
fn interactive_reject_then_approve() {
    let s = scenarios::bundled("medical-triage").unwrap();
    let config = EngineConfig::default().with_mode(VerificationMode::Interactive);
    let pipeline = s.pipeline();
    let (mut session, outcome) = pipeline.start(s.query(), config).unwrap();
    assert_eq!(outcome, StepOutcome::AwaitingUser);
    assert_eq!(session.awaiting_layer().unwrap().index, 0);

    let effect = apply_feedback(&mut session, &Feedback::reject("", 0, "check age")).unwrap();
    assert_eq!(effect.state_after, LayerState::Refining);
    assert_eq!(pipeline.drive(&mut session).unwrap(), StepOutcome::AwaitingUser);
    assert_eq!(session.layers[0].attempt, 2);

    // stale attempt and wrong layer are refused without side effects
    let before = session.events.len();
    let stale = Feedback {
        attempt: Some(1),
        ..Feedback::approve(&session.id, 0)
    };
    assert!(matches!(
        apply_feedback(&mut session, &stale),
        Err(EngineError::StaleAttempt { current: 2, got: 1 })
    ));
    assert!(matches!(
        apply_feedback(&mut session, &Feedback::approve("", 1)),
        Err(EngineError::WrongLayer { .. })
    ));
    assert_eq!(session.events.len(), before);

    apply_feedback(&mut session, &Feedback::approve("", 0)).unwrap();
    assert_eq!(pipeline.drive(&mut session).unwrap(), StepOutcome::AwaitingUser);
    apply_feedback(&mut session, &Feedback::approve("", 1)).unwrap();
    assert_eq!(pipeline.drive(&mut session).unwrap(), StepOutcome::Finished);
    let accepted: Vec<_> = session
        .events
        .iter()
        .filter_map(|e| match &e.body {
            layercot::engine::EventBody::LayerAccepted { source, .. } => Some(*source),
            _ => None,
        })
        .collect();
    assert_eq!(accepted, vec![VerdictSource::User, VerdictSource::User]);
    assert!(audit(&session).is_empty());
}

#[test]
fn reject_without_budget_fails_the_layer() {
    let s = scenarios::bundled("medical-triage").unwrap();
    let config = EngineConfig::default()
        .with_mode(VerificationMode::Interactive)
        .with_max_refinements(0);
    let (mut session, _) = s.pipeline().start(s.query(), config).unwrap();
    let effect = apply_feedback(&mut session, &Feedback::reject("", 0, "no")).unwrap();
    assert_eq!(effect.state_after, LayerState::Failed);
    assert_eq!(session.status(), SessionStatus::Failed);
    assert!(matches!(
        apply_feedback(&mut session, &Feedback::approve("", 0)),
        Err(EngineError::SessionClosed)
    ));
}

#[test]
fn annotate_adds_a_constraint_without_spending_budget() {
    let s = scenarios::bundled("algorithm-x").unwrap();
    let config = EngineConfig::default().with_mode(VerificationMode::Interactive);
    let pipeline = s.pipeline();
    let (mut session, _) = pipeline.start(s.query(), config).unwrap();
    apply_feedback(&mut session, &Feedback::annotate("", 0, "assume 50 nodes")).unwrap();
    assert_eq!(session.query.constraints, vec!["assume 50 nodes".to_string()]);
    pipeline.drive(&mut session).unwrap();
    assert_eq!(session.layers[0].refinements, 0);
    assert_eq!(session.layers[0].state, LayerState::AwaitingUser);
}

#[test]
fn hybrid_escalates_only_unsupported_layers() {
    // medical layer 0 has an Unknown claim, so it goes to the reviewer
    let s = scenarios::bundled("medical-triage").unwrap();
    let config = EngineConfig::default().with_mode(VerificationMode::Hybrid);
    let (session, outcome) = s.pipeline().start(s.query(), config.clone()).unwrap();
    assert_eq!(outcome, StepOutcome::AwaitingUser);
    assert_eq!(session.awaiting_layer().unwrap().index, 0);

    // algorithm-x layers are fully supported and pass on their own
    let s = scenarios::bundled("algorithm-x").unwrap();
    let (_, outcome) = s.pipeline().start(s.query(), config).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
}

struct Flaky {
    fail_on: std::sync::atomic::AtomicUsize,
    inner: layercot::scenarios::Scenario,
}

impl Backend for Flaky {
    fn complete(&self, request: &layercot::agents::AgentRequest) -> Result<String, BackendError> {
        use std::sync::atomic::Ordering;
        if request.step == Step::Partial && request.layer == Some(1) && self.fail_on.fetch_sub(1, Ordering::SeqCst) > 0 {
            return Err(BackendError::Timeout(60));
        }
        self.inner.backend().complete(request)
    }
}

#[test]
fn backend_failure_leaves_session_resumable() {
    let scenario = scenarios::bundled("algorithm-x").unwrap();
    let flaky = Flaky {
        fail_on: 1.into(),
        inner: scenario.clone(),
    };
    let pipeline = Pipeline::new(AgentRoster::shared(Arc::new(flaky)), scenario.facts.clone());
    let mut session = Session::new(scenario.query(), EngineConfig::default()).unwrap();
    let err = pipeline.drive(&mut session).unwrap_err();
    assert!(matches!(err, EngineError::Backend(_)));
    let events = session.events.len();
    assert_eq!(session.layers[1].state, LayerState::Reasoning);
    assert_eq!(pipeline.drive(&mut session).unwrap(), StepOutcome::Finished);
    assert_eq!(session.events.len(), events + 4);
    assert!(audit(&session).is_empty());
}

#[test]
fn planner_failure_is_reported() {
    let pipeline = Pipeline::new(AgentRoster::shared(Arc::new(FailingBackend)), Arc::new(FactStore::default()));
    let mut session = Session::new(Query::new("q"), EngineConfig::default()).unwrap();
    assert!(matches!(pipeline.drive(&mut session), Err(EngineError::PlannerUnavailable(_))));
    assert_eq!(session.status(), SessionStatus::Created);
}

#[test]
fn empty_plan_is_rejected() {
    let pipeline = Pipeline::new(
        AgentRoster::shared(Arc::new(FixedBackend::new("no layer lines here"))),
        Arc::new(FactStore::default()),
    );
    let mut session = Session::new(Query::new("q"), EngineConfig::default()).unwrap();
    assert_eq!(pipeline.drive(&mut session), Err(EngineError::EmptyPlan));
}

#[test]
fn plan_is_truncated_to_max_layers() {
    let backend = FaultBackend::new(1, 5, 0.0, 1.0, 0.0);
    let (session, _) = fault_pipeline(backend).start(Query::new("q"), automatic(3, 0)).unwrap();
    assert_eq!(session.layers.len(), 3);
}

#[test]
fn single_layer_uses_the_query_as_objective() {
    let backend = FaultBackend::new(1, 4, 0.0, 1.0, 0.0);
    let (session, outcome) = fault_pipeline(backend).start(Query::new("the question"), automatic(1, 0)).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
    assert_eq!(session.layers.len(), 1);
    assert_eq!(session.layers[0].objective, "the question");
}

#[test]
fn backend_calls_are_n_plus_two_without_refinement() {
    for n in [1usize, 2, 3, 5] {
        let counting = Arc::new(CountingBackend::new(FaultBackend::new(9, n, 0.0, 1.0, 0.0)));
        let pipeline = Pipeline::new(AgentRoster::shared(counting.clone()), Arc::new(common::fault_store(n)));
        let (session, outcome) = pipeline.start(Query::new("q"), automatic(n, 0)).unwrap();
        assert_eq!(outcome, StepOutcome::Finished);
        assert_eq!(counting.calls(), n + 2, "n = {n}");
        assert_eq!(session.backend_calls(), n + 2);
    }
}

#[test]
fn quality_counts_supported_over_emitted() {
    let s = scenarios::bundled("financial-risk").unwrap();
    let (session, _) = s.pipeline().start(s.query(), EngineConfig::default()).unwrap();
    // 6 claims emitted; the granted-patent claim is the only one not supported
    let q = quality(&session.events);
    assert!((q - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(session.final_answer.unwrap().quality, q);
}

#[test]
fn randomized_runs_smoke() {
    for seed in 0..300 {
        let run = random_run(seed);
        assert!(run.violations.is_empty(), "seed {seed}: {:?}", run.violations);
        assert!(run.session.status().is_closed(), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_runs_hold_every_invariant(seed in any::<u64>()) {
        let run = random_run(seed);
        prop_assert!(run.violations.is_empty(), "{:?}", run.violations);
        for layer in &run.session.layers {
            prop_assert!(layer.refinements <= run.session.config.max_refinements);
        }
    }

    #[test]
    fn replay_of_any_prefix_succeeds(seed in 0u64..5000, cut in 0usize..40) {
        let run = random_run(seed);
        let n = run.session.events.len();
        let prefix = run.session.events[..1 + cut % n].to_vec();
        prop_assert!(Session::replay(prefix).is_ok());
    }
}
