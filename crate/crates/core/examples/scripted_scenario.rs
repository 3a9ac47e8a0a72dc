//! Runs a bundled scenario end to end in automatic mode and prints the
//! trace, then the unverified single-pass answer for comparison.
//!
//!     cargo run --example scripted_scenario -- financial-risk

use layercot::engine::{EngineConfig, EventBody};
use layercot::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "medical-triage".into());
    let scenario = scenarios::bundled(&name)?;
    let pipeline = scenario.pipeline();

    let (session, outcome) = pipeline.start(scenario.query(), EngineConfig::default())?;
    println!("{name}: {outcome:?}\n");
    for event in &session.events {
        let detail = match &event.body {
            EventBody::Planned { plan } => plan
                .sub_problems
                .iter()
                .map(|s| s.objective.as_str())
                .collect::<Vec<_>>()
                .join(" / "),
            EventBody::PartialGenerated { partial, .. } | EventBody::Refined { partial, .. } => {
                format!("layer {} attempt {}", partial.layer_index, partial.attempt)
            }
            EventBody::VerdictRecorded { verdict } => format!(
                "layer {} {:?} {:?}",
                verdict.layer_index, verdict.aggregate, verdict.per_claim
            ),
            EventBody::Integrated { answer } => answer.text.clone(),
            _ => String::new(),
        };
        println!("{:>3} {:<17} {detail}", event.seq, format!("{:?}", event.kind()));
    }

    let answer = session.final_answer.expect("finished sessions have an answer");
    println!("\nlayered answer (quality {:.2}): {}", answer.quality, answer.text);
    let (vanilla, _) = pipeline.run_vanilla(&scenario.query())?;
    println!("single-pass answer: {}", vanilla.text);
    Ok(())
}
