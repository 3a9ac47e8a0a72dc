use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use layercot::agents::{
    AgentRequest, AgentRoster, Backend, BackendError, ChatBackendConfig, HttpChatBackend, RoleKind, Step,
};
use layercot::engine::{EngineConfig, Pipeline, Query, StepOutcome};
use layercot::knowledge::FactStore;
use serde_json::{json, Value};

#[derive(Default)]
struct Mock {
    calls: AtomicUsize,
    /// Number of leading calls answered with `fail_status`.
    fail_first: usize,
    fail_status: u16,
    auth: Mutex<Vec<Option<String>>>,
    bodies: Mutex<Vec<Value>>,
    reply: String,
}

async fn completions(State(mock): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = mock.calls.fetch_add(1, Ordering::SeqCst);
    mock.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    mock.bodies.lock().unwrap().push(body);
    if n < mock.fail_first {
        return (
            StatusCode::from_u16(mock.fail_status).unwrap(),
            Json(json!({"error": "try later"})),
        );
    }
    (
        StatusCode::OK,
        Json(json!({"choices": [{"message": {"role": "assistant", "content": mock.reply}}]})),
    )
}

/// Starts the mock on a background runtime and returns its base URL.
fn spawn(mock: Arc<Mock>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}/v1", rx.recv().unwrap())
}

fn request(step: Step) -> AgentRequest {
    AgentRequest {
        role: RoleKind::Reasoner,
        step,
        layer: Some(0),
        attempt: 1,
        prompt: "Explain the layer.".into(),
    }
}

fn config(base: &str, token_env: Option<&str>) -> ChatBackendConfig {
    ChatBackendConfig {
        auth_token_env: token_env.map(str::to_string),
        timeout_secs: 5,
        max_retries: 2,
        ..ChatBackendConfig::new(base, "test-model")
    }
}

#[test]
fn sends_bearer_token_and_model() {
    let mock = Arc::new(Mock {
        reply: "partial text".into(),
        ..Default::default()
    });
    let base = spawn(mock.clone());
    std::env::set_var("LAYERCOT_TEST_TOKEN_A", "sk-secret-a");
    let backend = HttpChatBackend::new(config(&base, Some("LAYERCOT_TEST_TOKEN_A"))).unwrap();
    assert_eq!(backend.complete(&request(Step::Partial)).unwrap(), "partial text");
    assert_eq!(mock.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-secret-a"));
    let body = &mock.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][1]["content"], "Explain the layer.");
    assert!(!backend.describe().contains("sk-secret-a"));
}

#[test]
fn retries_server_errors_then_succeeds() {
    let mock = Arc::new(Mock {
        fail_first: 2,
        fail_status: 503,
        reply: "ok".into(),
        ..Default::default()
    });
    let base = spawn(mock.clone());
    let backend = HttpChatBackend::new(config(&base, None)).unwrap();
    assert_eq!(backend.complete(&request(Step::Partial)).unwrap(), "ok");
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
    assert_eq!(mock.auth.lock().unwrap()[0], None);
}

#[test]
fn gives_up_after_max_retries() {
    let mock = Arc::new(Mock {
        fail_first: 10,
        fail_status: 429,
        ..Default::default()
    });
    let base = spawn(mock.clone());
    let backend = HttpChatBackend::new(config(&base, None)).unwrap();
    let err = backend.complete(&request(Step::Partial)).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 429, .. }));
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = Arc::new(Mock {
        fail_first: 10,
        fail_status: 400,
        ..Default::default()
    });
    let base = spawn(mock.clone());
    let backend = HttpChatBackend::new(config(&base, None)).unwrap();
    assert!(backend.complete(&request(Step::Partial)).is_err());
    assert_eq!(mock.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_token_variable_is_reported_by_name() {
    let backend = HttpChatBackend::new(config("http://127.0.0.1:9/v1", Some("LAYERCOT_TEST_UNSET_VAR"))).unwrap();
    match backend.complete(&request(Step::Partial)) {
        Err(BackendError::MissingToken(name)) => assert_eq!(name, "LAYERCOT_TEST_UNSET_VAR"),
        other => panic!("expected MissingToken, got {other:?}"),
    }
}

#[test]
fn token_never_reaches_the_trace() {
    let mock = Arc::new(Mock {
        fail_first: 1,
        fail_status: 500,
        reply: "LAYER: gather facts\nLAYER: conclude\nCLAIM: a | b | c".into(),
        ..Default::default()
    });
    let base = spawn(mock.clone());
    std::env::set_var("LAYERCOT_TEST_TOKEN_B", "sk-secret-b");
    let cfg = config(&base, Some("LAYERCOT_TEST_TOKEN_B"));
    let backend = HttpChatBackend::new(cfg.clone()).unwrap();
    let pipeline = Pipeline::new(AgentRoster::shared(Arc::new(backend)), Arc::new(FactStore::default()));
    let engine = EngineConfig::default().with_backend(layercot::BackendSelector::Http(cfg));
    let (session, outcome) = pipeline.start(Query::new("anything"), engine).unwrap();
    assert_eq!(outcome, StepOutcome::Finished);
    assert_eq!(session.layers.len(), 2);
    let log = serde_json::to_string(&session.events).unwrap();
    assert!(!log.contains("sk-secret-b"));
    assert!(log.contains("LAYERCOT_TEST_TOKEN_B"));
    assert!(mock
        .auth
        .lock()
        .unwrap()
        .iter()
        .all(|a| a.as_deref() == Some("Bearer sk-secret-b")));
}
