//! Line grammar for machine-checkable claims and planner output.
//!
//! ```text
//! CLAIM: <subject> | <predicate> | <object>
//! LAYER: <objective>
//! ```
//!
//! Lines are matched after trimming surrounding whitespace. Anything else
//! is narrative.

use crate::engine::{Assertion, Claim};

const CLAIM_PREFIX: &str = "CLAIM:";
const LAYER_PREFIX: &str = "LAYER:";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedClaims {
    pub claims: Vec<Claim>,
    /// One message per malformed `CLAIM:` line.
    pub warnings: Vec<String>,
}

/// Extracts claims from a narrative. Malformed claim lines are skipped and
/// reported in `warnings`; this never fails.
pub fn parse_claims(narrative: &str) -> ParsedClaims {
    let mut out = ParsedClaims::default();
    for (lineno, line) in narrative.lines().enumerate() {
        let Some(body) = line.trim().strip_prefix(CLAIM_PREFIX) else {
            continue;
        };
        let fields: Vec<&str> = body.split('|').map(str::trim).collect();
        match fields.as_slice() {
            [s, p, o] if !s.is_empty() && !p.is_empty() && !o.is_empty() => {
                let id = format!("c{}", out.claims.len() + 1);
                out.claims.push(Claim {
                    id,
                    statement: format!("{s} | {p} | {o}"),
                    assertion: Some(Assertion::new(*s, *p, *o)),
                    confidence: None,
                });
            }
            [_, _, _] => out.warnings.push(format!(
                "line {}: claim has an empty field: {}",
                lineno + 1,
                line.trim()
            )),
            other => out.warnings.push(format!(
                "line {}: claim has {} fields, expected 3: {}",
                lineno + 1,
                other.len(),
                line.trim()
            )),
        }
    }
    out
}

/// Renders claims back into `CLAIM:` lines.
pub fn render_claims(claims: &[Claim]) -> String {
    claims
        .iter()
        .filter_map(|c| c.assertion.as_ref())
        .map(|a| format!("{CLAIM_PREFIX} {} | {} | {}\n", a.subject, a.predicate, a.object))
        .collect()
}

/// The narrative with every `CLAIM:` line removed and surrounding blank
/// lines trimmed.
pub fn strip_claims(narrative: &str) -> String {
    narrative
        .lines()
        .filter(|l| !l.trim().starts_with(CLAIM_PREFIX))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Objectives from `LAYER:` lines, in order. Blank objectives are dropped.
pub fn parse_plan(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix(LAYER_PREFIX))
        .map(str::trim)
        .filter(|o| !o.is_empty())
        .map(str::to_string)
        .collect()
}
