//! Test doubles. Public so examples and integration tests can use them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{AgentRequest, Backend, BackendError};

/// Returns the prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        Ok(request.prompt.clone())
    }

    fn describe(&self) -> String {
        "echo".into()
    }
}

/// Returns the same text for every request.
#[derive(Debug, Clone)]
pub struct FixedBackend {
    text: String,
}

impl FixedBackend {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }
}

impl Backend for FixedBackend {
    fn complete(&self, _request: &AgentRequest) -> Result<String, BackendError> {
        Ok(self.text.clone())
    }
}

/// Fails every request.
#[derive(Debug, Clone, Default)]
pub struct FailingBackend;

impl Backend for FailingBackend {
    fn complete(&self, _request: &AgentRequest) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("no backend configured".into()))
    }

    fn describe(&self) -> String {
        "failing".into()
    }
}

/// Counts calls made through it.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }

    fn describe(&self) -> String {
        format!("counting({})", self.inner.describe())
    }
}

/// Keeps a copy of every request.
#[derive(Debug, Default)]
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<AgentRequest>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<AgentRequest> {
        self.log.lock().expect("log poisoned").clone()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        self.log.lock().expect("log poisoned").push(request.clone());
        self.inner.complete(request)
    }

    fn describe(&self) -> String {
        format!("recording({})", self.inner.describe())
    }
}
