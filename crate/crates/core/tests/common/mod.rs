#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use layercot::agents::{AgentRequest, AgentRoster, Backend, BackendError, Step};
use layercot::engine::{
    apply_feedback, audit, read_jsonl, write_jsonl, EngineConfig, EngineError, Feedback, OnExhausted,
    Pipeline, Query, Session, StepOutcome, VerificationMode, Violation,
};
use layercot::knowledge::{load_store, FactStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type RequestKey = (Step, Option<usize>, u32, u64);

/// Fault-injecting backend. Each layer attempt is wrong with probability
/// `p`; the fact store covers an attempt with probability `q`. Covered
/// wrong attempts carry a contradicted claim, uncovered ones carry claims
/// the store cannot judge. Calls also fail transiently with probability
/// `transient` (once per request key) and occasionally contain malformed
/// claim lines. Responses are a pure function of (seed, step, layer,
/// attempt).
pub struct FaultBackend {
    pub seed: u64,
    pub layers: usize,
    pub p: f64,
    pub q: f64,
    pub transient: f64,
    failed_once: Mutex<HashSet<RequestKey>>,
}

impl FaultBackend {
    pub fn new(seed: u64, layers: usize, p: f64, q: f64, transient: f64) -> Self {
        Self {
            seed,
            layers,
            p,
            q,
            transient,
            failed_once: Mutex::new(HashSet::new()),
        }
    }

    fn rng(&self, step: Step, layer: Option<usize>, attempt: u32, salt: u64) -> ChaCha8Rng {
        let step_id = match step {
            Step::Plan => 1,
            Step::Partial => 2,
            Step::Integrate => 3,
            Step::Vanilla => 4,
        };
        let key = (self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            ^ (step_id << 56)
            ^ ((layer.map_or(0xFFFF, |l| l as u64)) << 32)
            ^ ((attempt as u64) << 8)
            ^ salt;
        ChaCha8Rng::seed_from_u64(key)
    }
}

/// Facts the fault backend's correct claims agree with.
pub fn fault_store(layers: usize) -> FactStore {
    let mut doc = String::from("@functional value\n");
    for k in 0..layers {
        doc.push_str(&format!("l{k} | value | good | true\n"));
    }
    load_store(&doc).expect("generated facts parse")
}

impl Backend for FaultBackend {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        let mut transient = self.rng(request.step, request.layer, request.attempt, 0xFA11);
        if transient.random::<f64>() < self.transient {
            // Annotated regenerations reuse the attempt number, so key the
            // one-off failure on the prompt too.
            let prompt_hash = request.prompt.len() as u64;
            let key = (request.step, request.layer, request.attempt, prompt_hash);
            if self.failed_once.lock().unwrap().insert(key) {
                return Err(BackendError::Unavailable("injected transient failure".into()));
            }
        }
        let mut rng = self.rng(request.step, request.layer, request.attempt, 0);
        Ok(match request.step {
            Step::Plan => (0..self.layers).map(|k| format!("LAYER: step {k}\n")).collect(),
            Step::Partial => {
                let k = request.layer.expect("partial requests name a layer");
                let a = request.attempt;
                let wrong = rng.random::<f64>() < self.p;
                let covered = rng.random::<f64>() < self.q;
                let mut text = format!("Reasoning for layer {k}, attempt {a}.\n");
                match (wrong, covered) {
                    (false, true) => text.push_str(&format!("CLAIM: l{k} | value | good\n")),
                    (false, false) => text.push_str(&format!("CLAIM: l{k} | note | a{a}\n")),
                    (true, true) => text.push_str(&format!("CLAIM: l{k} | value | bad\n")),
                    (true, false) => text.push_str(&format!("CLAIM: l{k} | guess | a{a}\n")),
                }
                if rng.random::<f64>() < 0.1 {
                    text.push_str("CLAIM: malformed line\n");
                }
                text
            }
            Step::Integrate => "Integrated answer.".into(),
            Step::Vanilla => "Single chain answer.".into(),
        })
    }

    fn describe(&self) -> String {
        format!("fault(seed {})", self.seed)
    }
}

pub fn fault_pipeline(backend: FaultBackend) -> Pipeline {
    let layers = backend.layers;
    Pipeline::new(AgentRoster::shared(Arc::new(backend)), Arc::new(fault_store(layers)))
}

/// Result of one randomized run.
pub struct RandomRun {
    pub session: Session,
    pub violations: Vec<Violation>,
}

/// Runs one randomized session to completion: random mode, layer count,
/// refinement budget and fault rates, with a random reviewer answering
/// every pause and transient backend failures retried.
pub fn random_run(seed: u64) -> RandomRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = rng.random_range(1..=5);
    let max_refinements = rng.random_range(0..=3);
    let mode = match rng.random_range(0..10) {
        0..=3 => VerificationMode::Automatic,
        4..=6 => VerificationMode::Hybrid,
        7..=8 => VerificationMode::Interactive,
        _ => VerificationMode::Vanilla,
    };
    let backend = FaultBackend::new(
        seed,
        layers,
        rng.random_range(0.0..0.6),
        rng.random_range(0.0..=1.0),
        rng.random_range(0.0..0.2),
    );
    let pipeline = fault_pipeline(backend);
    let config = EngineConfig::default()
        .with_mode(mode)
        .with_max_layers(layers)
        .with_max_refinements(max_refinements)
        .with_on_exhausted(OnExhausted::FailSession);
    let mut session = Session::new(Query::new(format!("randomized task {seed}")), config).unwrap();

    let mut backend_failures = 0;
    let mut annotations = 0;
    loop {
        match pipeline.drive(&mut session) {
            Ok(StepOutcome::Finished | StepOutcome::Failed) => break,
            Ok(StepOutcome::AwaitingUser) => {
                let layer = session.awaiting_layer().expect("a layer awaits review").index;
                let roll = rng.random_range(0..100);
                let feedback = if roll < 55 {
                    Feedback::approve(&session.id, layer)
                } else if roll < 85 || annotations >= 3 {
                    Feedback::reject(&session.id, layer, "please revise")
                } else {
                    annotations += 1;
                    Feedback::annotate(&session.id, layer, format!("constraint {annotations}"))
                };
                apply_feedback(&mut session, &feedback).expect("feedback on the awaiting layer applies");
            }
            Ok(StepOutcome::Progressed) => unreachable!("drive only stops at blocking points"),
            Err(EngineError::Backend(_) | EngineError::PlannerUnavailable(_)) => {
                backend_failures += 1;
                assert!(backend_failures < 100, "seed {seed}: backend never recovered");
            }
            Err(e) => panic!("seed {seed}: unexpected engine error {e}"),
        }
    }

    let mut violations = audit(&session);
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &session.events).unwrap();
    let replayed = Session::replay(read_jsonl(buf.as_slice()).unwrap()).unwrap();
    if serde_json::to_string(&replayed).unwrap() != serde_json::to_string(&session).unwrap() {
        violations.push(Violation::ReplayMismatch("JSONL round trip changed the session".into()));
    }
    RandomRun { session, violations }
}

/// Trace as JSON with timestamps and session ids blanked.
pub fn normalized_trace(events: &[serde_json::Value]) -> Vec<serde_json::Value> {
    events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e["ts"] = serde_json::Value::Null;
            blank_ids(&mut e);
            e
        })
        .collect()
}

fn blank_ids(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, val) in map.iter_mut() {
                if k == "session_id" || (k == "id" && val.is_string() && val.as_str().unwrap().len() == 36) {
                    *val = serde_json::Value::Null;
                } else {
                    blank_ids(val);
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(blank_ids),
        _ => {}
    }
}
