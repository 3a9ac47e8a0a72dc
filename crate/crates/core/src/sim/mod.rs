//! Error-propagation model comparing layered and single-pass reasoning.
//!
//! Each task has `num_layers` layers. A generated layer is wrong with
//! probability `error_prob`. Single-pass reasoning accepts every layer, so
//! a task is wrong if any layer is. The layered pipeline checks each
//! attempt: with probability `detection_prob` the check covers the
//! attempt, confirming it if correct and catching it if wrong. A caught
//! attempt is regenerated (an independent redraw) up to
//! `max_refinements` times; a layer still caught after that exhausts the
//! task, which stops without an answer. An uncovered wrong attempt is
//! accepted and the error propagates.
//!
//! Per layer, with `s = Σ_{k=0}^{R} (pq)^k`:
//!
//! | outcome          | probability    |
//! |------------------|----------------|
//! | accepted correct | `(1-p)·s`      |
//! | accepted wrong   | `p(1-q)·s`     |
//! | exhausted        | `(pq)^(R+1)`   |
//!
//! [`analytic`] evaluates the closed form, [`simulate`] runs the seeded
//! Monte Carlo, [`sweep`] does both over a parameter grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

mod csv_out;

pub use csv_out::{format_sig, write_csv, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_tasks: u64,
    pub num_layers: u32,
    pub error_prob: f64,
    pub detection_prob: f64,
    pub max_refinements: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_tasks: 1000,
            num_layers: 5,
            error_prob: 0.2,
            detection_prob: 0.9,
            max_refinements: 2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown sweep parameter `{0}` (expected p, q, N or R)")]
    BadParameter(String),
    #[error("value {value} is outside the domain of {param}")]
    BadValue { param: SweepParam, value: f64 },
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::InvalidConfig(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        prob("error_prob", self.error_prob)?;
        prob("detection_prob", self.detection_prob)?;
        if self.num_tasks == 0 {
            return Err(SimError::InvalidConfig("num_tasks must be at least 1".into()));
        }
        if self.num_layers == 0 {
            return Err(SimError::InvalidConfig("num_layers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub vanilla_error_rate: f64,
    /// Tasks that produced an answer containing an undetected wrong layer.
    pub layered_error_rate: f64,
    /// Tasks stopped because a layer ran out of refinements.
    pub exhausted_rate: f64,
    /// Layered pipeline: plan + one call per attempt + integrate when the
    /// task finishes.
    pub mean_backend_calls: f64,
    /// Share of layer attempts confirmed by verification.
    pub quality: f64,
}

impl SimResult {
    pub fn layered_success_rate(&self) -> f64 {
        1.0 - self.layered_error_rate - self.exhausted_rate
    }

    pub fn vanilla_success_rate(&self) -> f64 {
        1.0 - self.vanilla_error_rate
    }
}

/// Per-layer outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOutcome {
    pub accept_correct: f64,
    pub accept_wrong: f64,
    pub exhausted: f64,
}

impl LayerOutcome {
    pub fn new(p: f64, q: f64, max_refinements: u32) -> Self {
        let pq = p * q;
        let expected_attempts = geometric_sum(pq, max_refinements);
        Self {
            accept_correct: (1.0 - p) * expected_attempts,
            accept_wrong: p * (1.0 - q) * expected_attempts,
            exhausted: pq.powi(max_refinements as i32 + 1),
        }
    }
}

/// `Σ_{k=0}^{r} x^k`, which is also the expected number of attempts per layer.
fn geometric_sum(x: f64, r: u32) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..=r {
        sum += term;
        term *= x;
    }
    sum
}

/// Closed-form expectation of [`simulate`].
pub fn analytic(config: &SimConfig) -> SimResult {
    let p = config.error_prob;
    let q = config.detection_prob;
    let n = config.num_layers as i32;
    let layer = LayerOutcome::new(p, q, config.max_refinements);

    let survive = 1.0 - layer.exhausted;
    let no_exhaustion = survive.powi(n);
    let success = layer.accept_correct.powi(n);
    // Σ_{k<n} survive^k: expected number of layers reached.
    let layers_reached = if layer.exhausted == 0.0 {
        n as f64
    } else {
        (1.0 - no_exhaustion) / layer.exhausted
    };
    let attempts_per_layer = geometric_sum(p * q, config.max_refinements);

    SimResult {
        vanilla_error_rate: 1.0 - (1.0 - p).powi(n),
        layered_error_rate: (no_exhaustion - success).max(0.0),
        exhausted_rate: 1.0 - no_exhaustion,
        mean_backend_calls: 1.0 + attempts_per_layer * layers_reached + no_exhaustion,
        quality: (1.0 - p) * q,
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Tally {
    vanilla_errors: u64,
    layered_errors: u64,
    exhausted: u64,
    calls: u64,
    attempts: u64,
    confirmed: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            vanilla_errors: self.vanilla_errors + o.vanilla_errors,
            layered_errors: self.layered_errors + o.layered_errors,
            exhausted: self.exhausted + o.exhausted,
            calls: self.calls + o.calls,
            attempts: self.attempts + o.attempts,
            confirmed: self.confirmed + o.confirmed,
        }
    }
}

const CHUNK: u64 = 4096;

/// Random stream for one task, a pure function of (seed, task index).
fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

fn run_task(config: &SimConfig, rng: &mut ChaCha8Rng, first_wrong: &mut Vec<bool>, tally: &mut Tally) {
    let p = config.error_prob;
    let q = config.detection_prob;
    let max_attempts = config.max_refinements + 1;

    // First attempts are shared by both pipelines.
    first_wrong.clear();
    first_wrong.extend((0..config.num_layers).map(|_| rng.random::<f64>() < p));
    if first_wrong.iter().any(|w| *w) {
        tally.vanilla_errors += 1;
    }

    tally.calls += 1; // plan
    let mut propagated = false;
    for &first in first_wrong.iter() {
        let mut layer_done = false;
        for attempt in 1..=max_attempts {
            let wrong = if attempt == 1 { first } else { rng.random::<f64>() < p };
            let covered = rng.random::<f64>() < q;
            tally.calls += 1;
            tally.attempts += 1;
            if !covered || !wrong {
                if covered {
                    tally.confirmed += 1;
                }
                propagated |= wrong;
                layer_done = true;
                break;
            }
        }
        if !layer_done {
            tally.exhausted += 1;
            return;
        }
    }
    tally.calls += 1; // integrate
    if propagated {
        tally.layered_errors += 1;
    }
}

/// Seeded Monte Carlo over `num_tasks` independent tasks. The result is a
/// pure function of the config regardless of thread count.
pub fn simulate(config: &SimConfig) -> SimResult {
    let n = config.num_tasks;
    let chunks = n.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = Tally::default();
            let mut scratch = Vec::with_capacity(config.num_layers as usize);
            for task in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = task_rng(config.seed, task);
                run_task(config, &mut rng, &mut scratch, &mut tally);
            }
            tally
        })
        .reduce(Tally::default, |a, b| a + b);

    let n = n as f64;
    SimResult {
        vanilla_error_rate: tally.vanilla_errors as f64 / n,
        layered_error_rate: tally.layered_errors as f64 / n,
        exhausted_rate: tally.exhausted as f64 / n,
        mean_backend_calls: tally.calls as f64 / n,
        quality: if tally.attempts == 0 {
            0.0
        } else {
            tally.confirmed as f64 / tally.attempts as f64
        },
    }
}

/// Standard deviation of a Bernoulli rate estimated from `n` samples.
pub fn binomial_sigma(rate: f64, n: u64) -> f64 {
    (rate * (1.0 - rate) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "p")]
    ErrorProb,
    #[serde(rename = "q")]
    DetectionProb,
    #[serde(rename = "N")]
    Layers,
    #[serde(rename = "R")]
    Refinements,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::ErrorProb => "p",
            Self::DetectionProb => "q",
            Self::Layers => "N",
            Self::Refinements => "R",
        }
    }

    /// Returns `base` with this parameter set to `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<SimConfig, SimError> {
        let bad = || SimError::BadValue { param: self, value };
        let integral = |min: f64| {
            if value.fract() == 0.0 && value >= min && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(bad())
            }
        };
        let mut config = *base;
        match self {
            Self::ErrorProb | Self::DetectionProb if !(0.0..=1.0).contains(&value) => return Err(bad()),
            Self::ErrorProb => config.error_prob = value,
            Self::DetectionProb => config.detection_prob = value,
            Self::Layers => config.num_layers = integral(1.0)?,
            Self::Refinements => config.max_refinements = integral(0.0)?,
        }
        Ok(config)
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p" | "error_prob" => Ok(Self::ErrorProb),
            "q" | "detection_prob" => Ok(Self::DetectionProb),
            "N" | "num_layers" => Ok(Self::Layers),
            "R" | "max_refinements" => Ok(Self::Refinements),
            other => Err(SimError::BadParameter(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub config: SimConfig,
    pub simulated: SimResult,
    pub analytic: SimResult,
}

/// Runs [`simulate`] and [`analytic`] for each value of one parameter.
pub fn sweep(base: &SimConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    base.validate()?;
    values
        .iter()
        .map(|&value| {
            let config = param.apply(base, value)?;
            Ok(SweepRow {
                param,
                value,
                config,
                simulated: simulate(&config),
                analytic: analytic(&config),
            })
        })
        .collect()
}
