use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::types::{
    EngineConfig, Feedback, FinalAnswer, LayerPlan, PartialReasoning, Query, VerdictSource,
    VerificationVerdict,
};

/// One entry of a session's append-only log.
///
/// Serialized as a single JSON object with the fields `seq`, `ts`, `kind`
/// and `payload`, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    /// Session metadata; always the first event of a log.
    Created {
        session_id: String,
        query: Query,
        config: EngineConfig,
    },
    Planned {
        plan: LayerPlan,
    },
    PartialGenerated {
        partial: PartialReasoning,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    VerdictRecorded {
        verdict: VerificationVerdict,
    },
    FeedbackReceived {
        feedback: Feedback,
    },
    Refined {
        partial: PartialReasoning,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    LayerAccepted {
        layer_index: usize,
        source: VerdictSource,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        flagged: bool,
    },
    LayerFailed {
        layer_index: usize,
        reason: String,
    },
    Integrated {
        answer: FinalAnswer,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Created,
    Planned,
    PartialGenerated,
    VerdictRecorded,
    FeedbackReceived,
    Refined,
    LayerAccepted,
    LayerFailed,
    Integrated,
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::Created { .. } => EventKind::Created,
            Self::Planned { .. } => EventKind::Planned,
            Self::PartialGenerated { .. } => EventKind::PartialGenerated,
            Self::VerdictRecorded { .. } => EventKind::VerdictRecorded,
            Self::FeedbackReceived { .. } => EventKind::FeedbackReceived,
            Self::Refined { .. } => EventKind::Refined,
            Self::LayerAccepted { .. } => EventKind::LayerAccepted,
            Self::LayerFailed { .. } => EventKind::LayerFailed,
            Self::Integrated { .. } => EventKind::Integrated,
        }
    }

    /// Layer the event is about, if any.
    pub fn layer(&self) -> Option<usize> {
        match self {
            Self::PartialGenerated { partial, .. } | Self::Refined { partial, .. } => {
                Some(partial.layer_index)
            }
            Self::VerdictRecorded { verdict } => Some(verdict.layer_index),
            Self::FeedbackReceived { feedback } => Some(feedback.layer_index),
            Self::LayerAccepted { layer_index, .. } | Self::LayerFailed { layer_index, .. } => {
                Some(*layer_index)
            }
            Self::Created { .. } | Self::Planned { .. } | Self::Integrated { .. } => None,
        }
    }

    /// Whether producing this event required a backend call.
    pub fn is_backend_call(&self) -> bool {
        matches!(
            self,
            Self::Planned { .. }
                | Self::PartialGenerated { .. }
                | Self::Refined { .. }
                | Self::Integrated { .. }
        )
    }
}

impl TraceEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: missing trailing newline (truncated write)")]
    Truncated { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes events as JSON Lines.
pub fn write_jsonl<W: Write>(mut out: W, events: &[TraceEvent]) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON Lines event log. Every record must be newline-terminated;
/// a final unterminated line is reported as truncation.
pub fn read_jsonl<R: BufRead>(mut input: R) -> Result<Vec<TraceEvent>, LogError> {
    let mut events = Vec::new();
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        if input.read_line(&mut buf)? == 0 {
            break;
        }
        line += 1;
        if !buf.ends_with('\n') {
            return Err(LogError::Truncated { line });
        }
        let text = buf.trim_end();
        if text.is_empty() {
            continue;
        }
        let event = serde_json::from_str(text).map_err(|source| LogError::Parse { line, source })?;
        events.push(event);
    }
    Ok(events)
}
