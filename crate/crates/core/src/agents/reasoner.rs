use super::{parse_claims, render_prompt, AgentError, AgentRequest, AgentRoster, PromptContext, PromptSet, Step};
use crate::engine::{PartialReasoning, SubProblem, VerificationVerdict};

/// Produces the first (or a post-annotation) attempt for a layer.
///
/// Returns the partial reasoning together with parser warnings.
pub fn generate_partial(
    sub_problem: &SubProblem,
    context: &PromptContext,
    attempt: u32,
    prompts: &PromptSet,
    agents: &AgentRoster,
) -> Result<(PartialReasoning, Vec<String>), AgentError> {
    let context = PromptContext {
        objective: Some(sub_problem.objective.clone()),
        ..context.clone()
    };
    let prompt = render_prompt(&prompts.partial, &context)?;
    let request = AgentRequest {
        role: Step::Partial.role(),
        step: Step::Partial,
        layer: Some(sub_problem.index),
        attempt,
        prompt,
    };
    let narrative = agents.call(&request)?;
    let parsed = parse_claims(&narrative);
    Ok((
        PartialReasoning {
            layer_index: sub_problem.index,
            narrative,
            claims: parsed.claims,
            attempt,
        },
        parsed.warnings,
    ))
}

/// Text fed into `{rejection_note}` for a refinement: the previous
/// narrative, every contradicted claim with its evidence, and the
/// reviewer's note if there is one.
pub fn revision_notes(
    previous: &PartialReasoning,
    verdict: Option<&VerificationVerdict>,
    rejection_note: Option<&str>,
) -> String {
    let mut out = format!("Previous attempt:\n{}\n", previous.narrative.trim_end());
    if let Some(verdict) = verdict {
        let contradicted: Vec<&str> = verdict.contradicted().collect();
        if !contradicted.is_empty() {
            out.push_str("\nContradicted claims:\n");
            for id in contradicted {
                let statement = previous
                    .claims
                    .iter()
                    .find(|c| c.id == id)
                    .map_or(id, |c| c.statement.as_str());
                out.push_str(&format!("- {statement}\n"));
                for e in verdict.evidence.iter().filter(|e| e.claim_id == id) {
                    out.push_str(&format!("  evidence: {}\n", e.text));
                }
            }
        }
    }
    if let Some(note) = rejection_note {
        out.push_str(&format!("\nReviewer note: {note}\n"));
    }
    out
}

/// Produces the next attempt for a layer after a contradiction or a
/// reviewer rejection.
#[allow(clippy::too_many_arguments)]
pub fn refine_partial(
    sub_problem: &SubProblem,
    previous: &PartialReasoning,
    verdict: Option<&VerificationVerdict>,
    rejection_note: Option<&str>,
    context: &PromptContext,
    max_refinements: u32,
    prompts: &PromptSet,
    agents: &AgentRoster,
) -> Result<(PartialReasoning, Vec<String>), AgentError> {
    if previous.attempt > max_refinements {
        return Err(AgentError::BudgetExhausted {
            layer: previous.layer_index,
            attempt: previous.attempt,
        });
    }
    let attempt = previous.attempt + 1;
    let context = PromptContext {
        objective: Some(sub_problem.objective.clone()),
        rejection_note: Some(revision_notes(previous, verdict, rejection_note)),
        ..context.clone()
    };
    let prompt = render_prompt(&prompts.refine, &context)?;
    let request = AgentRequest {
        role: Step::Partial.role(),
        step: Step::Partial,
        layer: Some(sub_problem.index),
        attempt,
        prompt,
    };
    let narrative = agents.call(&request)?;
    let parsed = parse_claims(&narrative);
    Ok((
        PartialReasoning {
            layer_index: sub_problem.index,
            narrative,
            claims: parsed.claims,
            attempt,
        },
        parsed.warnings,
    ))
}
