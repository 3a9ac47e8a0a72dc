//! Bundled scripted scenarios and backend resolution.

use std::path::Path;
use std::sync::Arc;

use crate::agents::{
    AgentRoster, Backend, BackendSelector, HttpChatBackend, ScenarioError, ScriptedBackend,
    ScriptedScenario,
};
use crate::agents::doubles::EchoBackend;
use crate::engine::{Pipeline, Query};
use crate::knowledge::{load_store, FactStore, KnowledgeError};

struct Bundled {
    name: &'static str,
    json: &'static str,
    facts: &'static str,
}

macro_rules! bundled {
    ($name:literal) => {
        Bundled {
            name: $name,
            json: include_str!(concat!("../scenarios/", $name, ".json")),
            facts: include_str!(concat!("../scenarios/", $name, ".facts")),
        }
    };
}

const BUNDLED: &[Bundled] = &[
    bundled!("algorithm-x"),
    bundled!("medical-triage"),
    bundled!("financial-risk"),
    bundled!("agile-team"),
];

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("fact file for `{scenario}`: {source}")]
    Facts {
        scenario: String,
        #[source]
        source: KnowledgeError,
    },
    #[error("backend: {0}")]
    Backend(String),
}

/// A loaded scenario with its fact store.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub script: Arc<ScriptedScenario>,
    pub facts: Arc<FactStore>,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.script.name
    }

    /// The scenario's own query, or a placeholder naming it.
    pub fn query(&self) -> Query {
        let text = self
            .script
            .query
            .clone()
            .unwrap_or_else(|| format!("Scenario {}", self.script.name));
        let query = Query::new(text);
        match &self.script.domain_tag {
            Some(tag) => query.with_domain(tag.clone()),
            None => query,
        }
    }

    pub fn backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(self.script.clone())
    }

    /// Scripted backend for every role, fact store as verifier.
    pub fn pipeline(&self) -> Pipeline {
        Pipeline::new(AgentRoster::shared(Arc::new(self.backend())), self.facts.clone())
    }

    /// Loads a scenario file; its `facts` path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ResolveError> {
        let script = ScriptedScenario::load(path)?;
        let facts_path = path.parent().unwrap_or(Path::new(".")).join(&script.facts_file);
        let facts = FactStore::load(&facts_path).map_err(|source| ResolveError::Facts {
            scenario: script.name.clone(),
            source,
        })?;
        Ok(Self {
            script: Arc::new(script),
            facts: Arc::new(facts),
        })
    }
}

pub fn names() -> Vec<&'static str> {
    BUNDLED.iter().map(|b| b.name).collect()
}

pub fn bundled(name: &str) -> Result<Scenario, ResolveError> {
    let b = BUNDLED
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| ResolveError::UnknownScenario(name.to_string()))?;
    let script = ScriptedScenario::from_json(b.json)?;
    let facts = load_store(b.facts).map_err(|source| ResolveError::Facts {
        scenario: name.to_string(),
        source,
    })?;
    Ok(Scenario {
        script: Arc::new(script),
        facts: Arc::new(facts),
    })
}

/// Builds the pipeline a session config asks for. Scripted sessions are
/// verified against their scenario's facts; other backends use `facts`.
pub fn pipeline_for(selector: &BackendSelector, facts: Arc<FactStore>) -> Result<Pipeline, ResolveError> {
    let backend: Arc<dyn Backend> = match selector {
        BackendSelector::Echo => Arc::new(EchoBackend),
        BackendSelector::Scripted { scenario } => return Ok(bundled(scenario)?.pipeline()),
        BackendSelector::Http(config) => Arc::new(
            HttpChatBackend::new(config.clone()).map_err(|e| ResolveError::Backend(e.to_string()))?,
        ),
    };
    Ok(Pipeline::new(AgentRoster::shared(backend), facts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_loads_and_is_complete() {
        for name in names() {
            let s = bundled(name).unwrap();
            assert_eq!(s.name(), name);
            assert!(!s.facts.is_empty(), "{name}");
            assert!(s.script.missing_responses(2).is_empty(), "{name}: {:?}", s.script.missing_responses(2));
            assert!(s.query().validate().is_ok());
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(bundled("nope"), Err(ResolveError::UnknownScenario(_))));
    }

    #[test]
    fn load_from_disk_resolves_facts_relative_to_file() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
        let s = Scenario::load(&dir.join("medical-triage.json")).unwrap();
        assert_eq!(s.script.planned_layers.len(), 2);
        assert_eq!(s.facts.len(), bundled("medical-triage").unwrap().facts.len());
    }
}
