use std::collections::HashMap;

use super::event::{EventBody, TraceEvent};
use super::types::{ClaimStatus, FeedbackAction};

struct AttemptTally {
    claims: usize,
    verified: usize,
}

/// Fraction of emitted claims that ended up verified.
///
/// A claim counts as verified when the verdict for its attempt marks it
/// `Supported`, or when a reviewer approved the attempt it belongs to.
/// Every claim of every attempt (including attempts that were later
/// refined away) is in the denominator. Returns 0 when no claims were
/// emitted.
pub fn quality(trace: &[TraceEvent]) -> f64 {
    let mut attempts: Vec<AttemptTally> = Vec::new();
    let mut latest: HashMap<usize, usize> = HashMap::new();

    for event in trace {
        match &event.body {
            EventBody::PartialGenerated { partial, .. } | EventBody::Refined { partial, .. } => {
                latest.insert(partial.layer_index, attempts.len());
                attempts.push(AttemptTally {
                    claims: partial.claims.len(),
                    verified: 0,
                });
            }
            EventBody::VerdictRecorded { verdict } => {
                if let Some(&slot) = latest.get(&verdict.layer_index) {
                    attempts[slot].verified = verdict.count(ClaimStatus::Supported);
                }
            }
            EventBody::FeedbackReceived { feedback } if feedback.action == FeedbackAction::Approve => {
                if let Some(&slot) = latest.get(&feedback.layer_index) {
                    attempts[slot].verified = attempts[slot].claims;
                }
            }
            _ => {}
        }
    }

    let total: usize = attempts.iter().map(|a| a.claims).sum();
    if total == 0 {
        return 0.0;
    }
    let verified: usize = attempts.iter().map(|a| a.verified).sum();
    verified as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::types::{
        Aggregate, Claim, Feedback, PartialReasoning, VerdictSource, VerificationVerdict,
    };

    fn ev(seq: u64, body: EventBody) -> TraceEvent {
        TraceEvent {
            seq,
            ts: chrono::Utc::now(),
            body,
        }
    }

    fn partial(layer: usize, n: usize) -> EventBody {
        EventBody::PartialGenerated {
            partial: PartialReasoning {
                layer_index: layer,
                narrative: String::new(),
                claims: (1..=n)
                    .map(|i| Claim {
                        id: format!("c{i}"),
                        statement: format!("claim {i}"),
                        assertion: None,
                        confidence: None,
                    })
                    .collect(),
                attempt: 1,
            },
            warnings: vec![],
        }
    }

    fn verdict(layer: usize, statuses: &[ClaimStatus]) -> EventBody {
        EventBody::VerdictRecorded {
            verdict: VerificationVerdict {
                layer_index: layer,
                per_claim: statuses
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (format!("c{}", i + 1), *s))
                    .collect(),
                aggregate: Aggregate::Accepted,
                evidence: vec![],
                source: VerdictSource::Knowledge,
            },
        }
    }

    use ClaimStatus::*;

    #[test]
    fn all_supported_is_one() {
        let trace = [ev(1, partial(0, 4)), ev(2, verdict(0, &[Supported; 4]))];
        assert_eq!(quality(&trace), 1.0);
    }

    #[test]
    fn no_verdicts_is_zero() {
        assert_eq!(quality(&[ev(1, partial(0, 3))]), 0.0);
        assert_eq!(quality(&[]), 0.0);
    }

    #[test]
    fn three_of_five() {
        let trace = [
            ev(1, partial(0, 2)),
            ev(2, verdict(0, &[Supported, Unknown])),
            ev(3, partial(1, 3)),
            ev(4, verdict(1, &[Supported, Supported, Unknown])),
        ];
        assert_eq!(quality(&trace), 0.6);
    }

    #[test]
    fn reviewer_approval_counts_every_claim() {
        let trace = [
            ev(1, partial(0, 2)),
            ev(2, verdict(0, &[Unknown, Unknown])),
            ev(
                3,
                EventBody::FeedbackReceived {
                    feedback: Feedback::approve("s", 0),
                },
            ),
        ];
        assert_eq!(quality(&trace), 1.0);
    }
}
