//! Plugs a hand-written backend into the pipeline. Set LAYERCOT_BASE_URL
//! (and optionally LAYERCOT_MODEL, LAYERCOT_TOKEN_ENV) to use an
//! OpenAI-compatible endpoint instead.

use std::sync::Arc;

use layercot::agents::{
    AgentRequest, AgentRoster, Backend, BackendError, ChatBackendConfig, HttpChatBackend, Step,
};
use layercot::engine::{EngineConfig, Pipeline, Query};
use layercot::knowledge::load_store;

/// Answers from a small rule table.
struct RuleBackend;

impl Backend for RuleBackend {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        Ok(match (request.step, request.layer) {
            (Step::Plan, _) => "LAYER: Check the unit conversion\nLAYER: Give the answer\n".into(),
            (Step::Partial, Some(0)) => "One mile is 1.609 km.\nCLAIM: mile | in_km | 1.609".into(),
            (Step::Partial, _) => "Ten miles is therefore 16.09 km.\nCLAIM: ten_miles | in_km | 16.09".into(),
            (Step::Integrate, _) | (Step::Vanilla, _) => "Ten miles is about 16.1 km.".into(),
        })
    }

    fn describe(&self) -> String {
        "rules".into()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend: Arc<dyn Backend> = match std::env::var("LAYERCOT_BASE_URL") {
        Ok(url) => {
            let mut config = ChatBackendConfig::new(url, std::env::var("LAYERCOT_MODEL").unwrap_or("gpt-4o-mini".into()));
            config.auth_token_env = std::env::var("LAYERCOT_TOKEN_ENV").ok();
            Arc::new(HttpChatBackend::new(config)?)
        }
        Err(_) => Arc::new(RuleBackend),
    };
    println!("backend: {}", backend.describe());

    let facts = load_store("mile | in_km | 1.609 | true\nten_miles | in_km | 16.09 | true\n")?;
    let pipeline = Pipeline::new(AgentRoster::shared(backend), Arc::new(facts));
    let (session, outcome) = pipeline.start(Query::new("How many kilometres is ten miles?"), EngineConfig::default())?;
    println!("{outcome:?} after {} backend calls", session.backend_calls());
    if let Some(answer) = session.final_answer {
        println!("{} (quality {:.2})", answer.text, answer.quality);
    }
    Ok(())
}
