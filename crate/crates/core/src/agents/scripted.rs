use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AgentRequest, Backend, BackendError, Step};

/// Lookup key for a canned response. `layer` is `None` for the plan,
/// integrate and vanilla steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponseKey {
    pub step: Step,
    pub layer: Option<usize>,
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Deserialize, Serialize)]
struct ScenarioFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    layers: Vec<String>,
    responses: Vec<ResponseEntry>,
    facts: PathBuf,
}

#[derive(Deserialize, Serialize)]
struct ResponseEntry {
    step: Step,
    #[serde(default)]
    layer: Option<usize>,
    #[serde(default = "first_attempt")]
    attempt: u32,
    text: String,
}

fn first_attempt() -> u32 {
    1
}

/// A deterministic fixture: planned layers, canned responses and the fact
/// file they are checked against. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedScenario {
    pub name: String,
    pub query: Option<String>,
    pub domain_tag: Option<String>,
    pub planned_layers: Vec<String>,
    pub responses: BTreeMap<ResponseKey, String>,
    /// As written in the scenario file; relative paths are relative to
    /// the scenario file's directory.
    pub facts_file: PathBuf,
}

impl ScriptedScenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let invalid = |message: String| ScenarioError::Invalid {
            name: file.name.clone(),
            message,
        };
        if file.layers.is_empty() {
            return Err(invalid("no layers".into()));
        }
        let mut responses = BTreeMap::new();
        for entry in &file.responses {
            let key = ResponseKey {
                step: entry.step,
                layer: entry.layer,
                attempt: entry.attempt,
            };
            let needs_layer = entry.step == Step::Partial;
            if needs_layer != entry.layer.is_some() {
                return Err(invalid(format!("response {key:?}: layer index mismatch for step")));
            }
            if entry.attempt == 0 {
                return Err(invalid(format!("response {key:?}: attempts start at 1")));
            }
            if responses.insert(key, entry.text.clone()).is_some() {
                return Err(invalid(format!("duplicate response for {key:?}")));
            }
        }
        Ok(Self {
            name: file.name,
            query: file.query,
            domain_tag: file.domain,
            planned_layers: file.layers,
            responses,
            facts_file: file.facts,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            name: self.name.clone(),
            query: self.query.clone(),
            domain: self.domain_tag.clone(),
            layers: self.planned_layers.clone(),
            responses: self
                .responses
                .iter()
                .map(|(k, text)| ResponseEntry {
                    step: k.step,
                    layer: k.layer,
                    attempt: k.attempt,
                    text: text.clone(),
                })
                .collect(),
            facts: self.facts_file.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// Keys the engine can reach with `max_refinements` retries that have
    /// no response.
    pub fn missing_responses(&self, max_refinements: u32) -> Vec<ResponseKey> {
        let mut wanted = vec![
            ResponseKey {
                step: Step::Integrate,
                layer: None,
                attempt: 1,
            },
            ResponseKey {
                step: Step::Vanilla,
                layer: None,
                attempt: 1,
            },
        ];
        for layer in 0..self.planned_layers.len() {
            for attempt in 1..=max_refinements + 1 {
                wanted.push(ResponseKey {
                    step: Step::Partial,
                    layer: Some(layer),
                    attempt,
                });
            }
        }
        wanted
            .into_iter()
            .filter(|k| !self.responses.contains_key(k))
            .collect()
    }

    pub fn response(&self, key: &ResponseKey) -> Option<&str> {
        self.responses.get(key).map(String::as_str)
    }

    /// Planner output: the explicit plan response if present, otherwise
    /// one `LAYER:` line per planned layer.
    pub fn plan_text(&self) -> String {
        let key = ResponseKey {
            step: Step::Plan,
            layer: None,
            attempt: 1,
        };
        match self.responses.get(&key) {
            Some(text) => text.clone(),
            None => self
                .planned_layers
                .iter()
                .map(|l| format!("LAYER: {l}\n"))
                .collect(),
        }
    }
}

/// Replays a [`ScriptedScenario`].
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    scenario: Arc<ScriptedScenario>,
}

impl ScriptedBackend {
    pub fn new(scenario: Arc<ScriptedScenario>) -> Self {
        Self { scenario }
    }

    pub fn scenario(&self) -> &ScriptedScenario {
        &self.scenario
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        if request.step == Step::Plan {
            return Ok(self.scenario.plan_text());
        }
        let key = ResponseKey {
            step: request.step,
            layer: if request.step == Step::Partial {
                request.layer
            } else {
                None
            },
            attempt: if request.step == Step::Partial {
                request.attempt
            } else {
                1
            },
        };
        self.scenario
            .response(&key)
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::Unavailable(format!(
                    "scenario `{}` has no response for step {} layer {:?} attempt {}",
                    self.scenario.name, key.step, key.layer, key.attempt
                ))
            })
    }

    fn describe(&self) -> String {
        format!("scripted({})", self.scenario.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::RoleKind;

    const SAMPLE: &str = r#"{
        "name": "tiny",
        "layers": ["one", "two"],
        "responses": [
            {"step": "partial", "layer": 0, "attempt": 1, "text": "first"},
            {"step": "partial", "layer": 0, "attempt": 2, "text": "second"},
            {"step": "integrate", "text": "done"}
        ],
        "facts": "tiny.facts"
    }"#;

    fn req(step: Step, layer: Option<usize>, attempt: u32) -> AgentRequest {
        AgentRequest {
            role: RoleKind::Reasoner,
            step,
            layer,
            attempt,
            prompt: "ignored".into(),
        }
    }

    #[test]
    fn lookup_is_keyed_by_layer_and_attempt() {
        let backend = ScriptedBackend::new(Arc::new(ScriptedScenario::from_json(SAMPLE).unwrap()));
        let a1 = backend.complete(&req(Step::Partial, Some(0), 1)).unwrap();
        let a2 = backend.complete(&req(Step::Partial, Some(0), 2)).unwrap();
        assert_eq!(a1, "first");
        assert_ne!(a1, a2);
        assert_eq!(backend.complete(&req(Step::Integrate, None, 7)).unwrap(), "done");
        assert_eq!(
            backend.complete(&req(Step::Plan, None, 1)).unwrap(),
            "LAYER: one\nLAYER: two\n"
        );
        assert!(backend.complete(&req(Step::Partial, Some(1), 1)).is_err());
    }

    #[test]
    fn coverage_report_lists_gaps() {
        let s = ScriptedScenario::from_json(SAMPLE).unwrap();
        let missing = s.missing_responses(1);
        assert!(missing.contains(&ResponseKey {
            step: Step::Partial,
            layer: Some(1),
            attempt: 1
        }));
        assert!(missing.contains(&ResponseKey {
            step: Step::Vanilla,
            layer: None,
            attempt: 1
        }));
        assert_eq!(missing.len(), 3);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let text = SAMPLE.replace(r#""attempt": 2"#, r#""attempt": 1"#);
        assert!(matches!(
            ScriptedScenario::from_json(&text),
            Err(ScenarioError::Invalid { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = ScriptedScenario::from_json(SAMPLE).unwrap();
        assert_eq!(ScriptedScenario::from_json(&s.to_json()).unwrap(), s);
    }
}
