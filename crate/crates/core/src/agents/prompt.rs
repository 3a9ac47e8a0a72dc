use serde::{Deserialize, Serialize};

use super::{AgentError, Step};

/// Template text with `{name}` placeholders.
///
/// Recognised names are `query`, `constraints`, `objective`,
/// `prior_layers` and `rejection_note`. A brace pair that does not enclose
/// a plain identifier (for example a JSON snippet) is copied verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub step: Step,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(step: Step, body: impl Into<String>) -> Self {
        Self {
            step,
            body: body.into(),
        }
    }
}

/// The slice of a session a prompt can see.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptContext {
    pub query: String,
    pub constraints: Vec<String>,
    pub objective: Option<String>,
    /// Accepted layers so far as (objective, narrative), in order.
    pub prior_layers: Vec<(String, String)>,
    pub rejection_note: Option<String>,
}

impl PromptContext {
    fn lookup(&self, name: &str) -> Option<String> {
        match name {
            "query" => Some(self.query.clone()),
            "constraints" => Some(
                self.constraints
                    .iter()
                    .map(|c| format!("- {c}"))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            "objective" => self.objective.clone(),
            "prior_layers" => Some(
                self.prior_layers
                    .iter()
                    .enumerate()
                    .map(|(i, (objective, narrative))| {
                        format!("Layer {} ({objective}):\n{narrative}", i + 1)
                    })
                    .collect::<Vec<_>>()
                    .join("\n\n"),
            ),
            "rejection_note" => self.rejection_note.clone(),
            _ => None,
        }
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Substitutes every placeholder in one pass. Substituted values are not
/// scanned again.
pub fn render_prompt(template: &PromptTemplate, context: &PromptContext) -> Result<String, AgentError> {
    let body = template.body.as_str();
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                let name = &after[..close];
                let value = context
                    .lookup(name)
                    .ok_or_else(|| AgentError::UnboundPlaceholder(name.to_string()))?;
                out.push_str(&value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

const PLAN: &str = "\
You are planning a layered analysis. Split the question into a short ordered list of \
sub-problems, each small enough to check against reference data on its own.

Question: {query}
Constraints:
{constraints}

Answer with one line per sub-problem, formatted exactly as:
LAYER: <objective>";

const PARTIAL: &str = "\
Question: {query}
Constraints:
{constraints}

Accepted findings so far:
{prior_layers}

Current sub-problem: {objective}

Reason about the current sub-problem only. State every checkable fact on its own line as:
CLAIM: <subject> | <predicate> | <object>";

const REFINE: &str = "\
Question: {query}
Constraints:
{constraints}

Accepted findings so far:
{prior_layers}

Current sub-problem: {objective}

Your previous attempt at this sub-problem did not pass review:
{rejection_note}

Write a corrected version. State every checkable fact on its own line as:
CLAIM: <subject> | <predicate> | <object>";

const INTEGRATE: &str = "\
Question: {query}
Constraints:
{constraints}

Verified findings:
{prior_layers}

Combine the verified findings into a final answer. Do not introduce facts that are not \
supported above.";

const VANILLA: &str = "\
Question: {query}
Constraints:
{constraints}

Think step by step, then state your final answer.";

/// The templates used for each step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub plan: PromptTemplate,
    pub partial: PromptTemplate,
    pub refine: PromptTemplate,
    pub integrate: PromptTemplate,
    pub vanilla: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            plan: PromptTemplate::new(Step::Plan, PLAN),
            partial: PromptTemplate::new(Step::Partial, PARTIAL),
            refine: PromptTemplate::new(Step::Partial, REFINE),
            integrate: PromptTemplate::new(Step::Integrate, INTEGRATE),
            vanilla: PromptTemplate::new(Step::Vanilla, VANILLA),
        }
    }
}
