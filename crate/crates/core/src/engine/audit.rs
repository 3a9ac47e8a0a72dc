//! Trace-level checks of the engine's safety properties.
//!
//! These run over a finished (or paused) session and report every
//! violation found. The property and acceptance suites call them after
//! each randomized run; the service uses [`audit`] before reloading a log.

use std::collections::{HashMap, HashSet};

use super::event::EventBody;
use super::session::Session;
use super::types::{FeedbackAction, LayerState, VerificationMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SequenceNotIncreasing { at: u64 },
    /// A layer left `Pending` while an earlier layer was not accepted.
    OutOfOrderProgression { seq: u64, layer: usize },
    RefinementBudgetExceeded { layer: usize, refinements: usize },
    AttemptOutOfRange { layer: usize, attempt: u32 },
    /// A later layer started while a contradiction on an earlier one was
    /// still unaddressed.
    ContradictionNotIntercepted { layer: usize, seq: u64 },
    AcceptedWithoutVerdict { layer: usize },
    ReplayMismatch(String),
}

pub fn audit(session: &Session) -> Vec<Violation> {
    let mut found = Vec::new();
    let events = &session.events;
    let max_refinements = session.config.max_refinements;
    let vanilla = session.config.verification_mode == VerificationMode::Vanilla;

    for pair in events.windows(2) {
        if pair[1].seq <= pair[0].seq {
            found.push(Violation::SequenceNotIncreasing { at: pair[1].seq });
        }
    }

    // Replay prefix by prefix and check the progression rule at every step.
    match events.first() {
        Some(header) => {
            let mut prefix = vec![header.clone()];
            for event in &events[1..] {
                prefix.push(event.clone());
                match Session::replay(prefix.clone()) {
                    Ok(state) => {
                        for (k, layer) in state.layers.iter().enumerate() {
                            let earlier_ok = state.layers[..k]
                                .iter()
                                .all(|l| l.state == LayerState::Accepted);
                            if layer.state != LayerState::Pending && !earlier_ok {
                                found.push(Violation::OutOfOrderProgression {
                                    seq: event.seq,
                                    layer: k,
                                });
                            }
                        }
                    }
                    Err(e) => {
                        found.push(Violation::ReplayMismatch(e.to_string()));
                        break;
                    }
                }
            }
        }
        None => found.push(Violation::ReplayMismatch("empty log".into())),
    }

    let mut refinements: HashMap<usize, usize> = HashMap::new();
    let mut verified: HashSet<usize> = HashSet::new();
    // Layers with a recorded contradiction not yet followed by a refinement
    // or reviewer decision.
    let mut open_contradiction: HashSet<usize> = HashSet::new();

    for event in events {
        match &event.body {
            EventBody::Refined { partial, .. } => {
                *refinements.entry(partial.layer_index).or_default() += 1;
                open_contradiction.remove(&partial.layer_index);
            }
            EventBody::VerdictRecorded { verdict } => {
                verified.insert(verdict.layer_index);
                if verdict.has_contradiction() {
                    open_contradiction.insert(verdict.layer_index);
                }
            }
            EventBody::FeedbackReceived { feedback } => {
                open_contradiction.remove(&feedback.layer_index);
                if feedback.action == FeedbackAction::Approve {
                    verified.insert(feedback.layer_index);
                }
            }
            EventBody::PartialGenerated { partial, .. } if !vanilla => {
                let k = partial.layer_index;
                if let Some(&blocked) = open_contradiction.iter().find(|&&j| j < k) {
                    found.push(Violation::ContradictionNotIntercepted {
                        layer: blocked,
                        seq: event.seq,
                    });
                }
            }
            _ => {}
        }
        if let EventBody::PartialGenerated { partial, .. } | EventBody::Refined { partial, .. } =
            &event.body
        {
            if partial.attempt == 0 || partial.attempt > max_refinements + 1 {
                found.push(Violation::AttemptOutOfRange {
                    layer: partial.layer_index,
                    attempt: partial.attempt,
                });
            }
        }
    }

    for (&layer, &count) in &refinements {
        if count > max_refinements as usize {
            found.push(Violation::RefinementBudgetExceeded {
                layer,
                refinements: count,
            });
        }
    }

    if !vanilla {
        for layer in &session.layers {
            if layer.state == LayerState::Accepted && !verified.contains(&layer.index) {
                found.push(Violation::AcceptedWithoutVerdict { layer: layer.index });
            }
        }
    }

    match Session::replay(events.clone()) {
        Ok(replayed) => {
            let a = serde_json::to_string(&replayed).expect("session serializes");
            let b = serde_json::to_string(session).expect("session serializes");
            if a != b {
                found.push(Violation::ReplayMismatch(
                    "replayed session differs from live session".into(),
                ));
            }
        }
        Err(e) => found.push(Violation::ReplayMismatch(e.to_string())),
    }

    found
}
