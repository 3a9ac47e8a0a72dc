//! Starts the HTTP service in-process on a free port, creates an
//! interactive session over HTTP, approves each layer and prints the trace.

use std::sync::Arc;

use layercot::engine::EngineConfig;
use layercot::knowledge::FactStore;
use layercot::service::{self, SessionManager, SessionStore};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("layercot-example-{}", std::process::id()));
    let manager = Arc::new(SessionManager::new(
        SessionStore::open(&root)?,
        EngineConfig::default(),
        Arc::new(FactStore::default()),
    ));

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    runtime.spawn(service::serve(listener, manager));

    let client = reqwest::blocking::Client::new();
    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({"scenario": "financial-risk", "config": {"verification_mode": "interactive"}}))
        .send()?
        .json()?;
    let id = created["id"].as_str().unwrap_or_default().to_string();
    println!("session {id}: {}", created["status"]);

    let mut view = created;
    while view["status"] == "AwaitingUser" {
        let layer = view["awaiting_layer"].clone();
        let response: Value = client
            .post(format!("{base}/sessions/{id}/feedback"))
            .json(&json!({"layer_index": layer, "action": "approve"}))
            .send()?
            .json()?;
        println!("approved layer {layer}: now {}", response["session"]["status"]);
        view = response["session"].clone();
    }
    println!("answer: {}", view["final"]["text"]);

    let trace: Vec<Value> = client.get(format!("{base}/sessions/{id}/trace")).send()?.json()?;
    for event in &trace {
        println!("{:>3} {}", event["seq"], event["kind"]);
    }
    println!("log: {}", root.join(format!("{id}.jsonl")).display());
    Ok(())
}
