use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::BackendSelector;

/// A user question together with the constraints accumulated while it is
/// being answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub domain_tag: String,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            text: text.into(),
            domain_tag: String::new(),
            constraints: Vec::new(),
        }
    }

    pub fn with_domain(mut self, tag: impl Into<String>) -> Self {
        self.domain_tag = tag.into();
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_constraint(mut self, constraint: impl Into<String>) -> Self {
        self.constraints.push(constraint.into());
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("query text must not be empty".into());
        }
        if self.id.trim().is_empty() {
            return Err("query id must not be empty".into());
        }
        Ok(())
    }
}

/// Where a layer's partial reasoning gets checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Knowledge,
    User,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubProblem {
    pub index: usize,
    pub objective: String,
    pub verification_sources: Vec<SourceKind>,
}

/// Ordered decomposition of a query into sub-problems, one per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub sub_problems: Vec<SubProblem>,
}

impl LayerPlan {
    /// Builds a plan from objectives, truncated to `max_layers`.
    pub fn from_objectives<I, S>(objectives: I, max_layers: usize, sources: &[SourceKind]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sub_problems = objectives
            .into_iter()
            .take(max_layers)
            .enumerate()
            .map(|(index, objective)| SubProblem {
                index,
                objective: objective.into(),
                verification_sources: sources.to_vec(),
            })
            .collect();
        Self { sub_problems }
    }

    pub fn len(&self) -> usize {
        self.sub_problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_problems.is_empty()
    }

    pub fn validate(&self, max_layers: usize) -> Result<(), String> {
        if self.sub_problems.is_empty() {
            return Err("plan has no sub-problems".into());
        }
        if self.sub_problems.len() > max_layers {
            return Err(format!(
                "plan has {} sub-problems, limit is {max_layers}",
                self.sub_problems.len()
            ));
        }
        for (i, sp) in self.sub_problems.iter().enumerate() {
            if sp.index != i {
                return Err(format!("sub-problem at position {i} has index {}", sp.index));
            }
            if sp.objective.trim().is_empty() {
                return Err(format!("sub-problem {i} has an empty objective"));
            }
        }
        Ok(())
    }
}

/// A structured (subject, predicate, object) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assertion {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Assertion {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        [&self.subject, &self.predicate, &self.object]
            .iter()
            .all(|f| !f.trim().is_empty())
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion: Option<Assertion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// One attempt at a layer: the generated narrative and the claims parsed out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialReasoning {
    pub layer_index: usize,
    pub narrative: String,
    pub claims: Vec<Claim>,
    /// 1-based.
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClaimStatus {
    Supported,
    Contradicted,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregate {
    Accepted,
    NeedsRefinement,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Knowledge,
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub claim_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub layer_index: usize,
    pub per_claim: BTreeMap<String, ClaimStatus>,
    pub aggregate: Aggregate,
    pub evidence: Vec<Evidence>,
    pub source: VerdictSource,
}

impl VerificationVerdict {
    pub fn contradicted(&self) -> impl Iterator<Item = &str> {
        self.per_claim
            .iter()
            .filter(|(_, s)| **s == ClaimStatus::Contradicted)
            .map(|(id, _)| id.as_str())
    }

    pub fn has_contradiction(&self) -> bool {
        self.contradicted().next().is_some()
    }

    pub fn count(&self, status: ClaimStatus) -> usize {
        self.per_claim.values().filter(|s| **s == status).count()
    }
}

/// Inputs to the aggregate decision rule.
///
/// Reviewer approval is not part of the rule: in interactive and hybrid
/// modes the engine routes the layer to a reviewer after the knowledge
/// verdict, and only an approval moves it to `Accepted`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerdictPolicy {
    /// True when at least one refinement attempt remains.
    pub budget_remains: bool,
}

impl VerdictPolicy {
    pub fn for_attempt(config: &EngineConfig, attempt: u32) -> Self {
        Self {
            budget_remains: attempt <= config.max_refinements,
        }
    }

    pub fn decide(&self, contradicted: usize) -> Aggregate {
        match (contradicted, self.budget_remains) {
            (0, _) => Aggregate::Accepted,
            (_, true) => Aggregate::NeedsRefinement,
            (_, false) => Aggregate::Rejected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackAction {
    Approve,
    Reject,
    Annotate,
}

/// Reviewer input for the layer currently awaiting a decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    #[serde(default)]
    pub session_id: String,
    pub layer_index: usize,
    pub action: FeedbackAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added_constraint: Option<String>,
    /// Attempt the reviewer looked at. When present it must match the
    /// layer's current attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
}

impl Feedback {
    pub fn approve(session_id: impl Into<String>, layer_index: usize) -> Self {
        Self {
            session_id: session_id.into(),
            layer_index,
            action: FeedbackAction::Approve,
            note: None,
            added_constraint: None,
            attempt: None,
        }
    }

    pub fn reject(session_id: impl Into<String>, layer_index: usize, note: impl Into<String>) -> Self {
        Self {
            note: Some(note.into()),
            action: FeedbackAction::Reject,
            ..Self::approve(session_id, layer_index)
        }
    }

    pub fn annotate(
        session_id: impl Into<String>,
        layer_index: usize,
        constraint: impl Into<String>,
    ) -> Self {
        Self {
            added_constraint: Some(constraint.into()),
            action: FeedbackAction::Annotate,
            ..Self::approve(session_id, layer_index)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let blank = |s: &Option<String>| s.as_deref().is_none_or(|s| s.trim().is_empty());
        match self.action {
            FeedbackAction::Reject if blank(&self.note) => {
                Err("reject requires a nonempty note".into())
            }
            FeedbackAction::Annotate if blank(&self.added_constraint) && blank(&self.note) => {
                Err("annotate requires a constraint or a note".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub supporting_layers: Vec<usize>,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    /// The fact store decides every layer.
    #[default]
    Automatic,
    /// Every layer waits for a reviewer after its knowledge check.
    Interactive,
    /// Layers whose claims are all supported pass automatically; anything
    /// else is escalated to a reviewer.
    Hybrid,
    /// Single unverified chain, no layers.
    Vanilla,
}

impl VerificationMode {
    pub fn sources(self) -> Vec<SourceKind> {
        match self {
            Self::Automatic => vec![SourceKind::Knowledge],
            Self::Interactive => vec![SourceKind::Knowledge, SourceKind::User],
            Self::Hybrid => vec![SourceKind::Knowledge, SourceKind::User],
            Self::Vanilla => vec![SourceKind::None],
        }
    }
}

impl std::str::FromStr for VerificationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "automatic" => Ok(Self::Automatic),
            "interactive" => Ok(Self::Interactive),
            "hybrid" => Ok(Self::Hybrid),
            "vanilla" => Ok(Self::Vanilla),
            other => Err(format!("unknown verification mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnExhausted {
    #[default]
    FailSession,
    AcceptFlagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub max_layers: usize,
    pub max_refinements: u32,
    pub verification_mode: VerificationMode,
    pub backend: BackendSelector,
    pub on_exhausted: OnExhausted,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_layers: 5,
            max_refinements: 2,
            verification_mode: VerificationMode::Automatic,
            backend: BackendSelector::Echo,
            on_exhausted: OnExhausted::FailSession,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_layers == 0 {
            return Err("max_layers must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: VerificationMode) -> Self {
        self.verification_mode = mode;
        self
    }

    pub fn with_backend(mut self, backend: BackendSelector) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_max_layers(mut self, n: usize) -> Self {
        self.max_layers = n;
        self
    }

    pub fn with_max_refinements(mut self, r: u32) -> Self {
        self.max_refinements = r;
        self
    }

    pub fn with_on_exhausted(mut self, on_exhausted: OnExhausted) -> Self {
        self.on_exhausted = on_exhausted;
        self
    }
}

/// Per-layer lifecycle state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerState {
    Pending,
    Reasoning,
    AwaitingVerification,
    AwaitingUser,
    Refining,
    Accepted,
    Failed,
}

impl LayerState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Accepted | Self::Failed)
    }
}
