//! A reviewer-in-the-loop session driven from code: the reviewer rejects
//! the first draft of layer 0 with a note, then approves everything.

use layercot::engine::{apply_feedback, EngineConfig, Feedback, StepOutcome, VerificationMode};
use layercot::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = scenarios::bundled("medical-triage")?;
    let pipeline = scenario.pipeline();
    let config = EngineConfig::default().with_mode(VerificationMode::Interactive);
    let (mut session, mut outcome) = pipeline.start(scenario.query(), config)?;

    let mut rejected = false;
    while outcome == StepOutcome::AwaitingUser {
        let layer = session.awaiting_layer().expect("paused on a layer").clone();
        let partial = layer.partial.as_ref().expect("layer has a draft");
        println!("layer {} ({}) attempt {}", layer.index, layer.objective, layer.attempt);
        for claim in &partial.claims {
            let status = layer.verdict.as_ref().and_then(|v| v.per_claim.get(&claim.id));
            println!("  {} -> {:?}", claim.statement, status);
        }
        let feedback = if !rejected {
            rejected = true;
            Feedback::reject(&session.id, layer.index, "factor in the patient's age")
        } else {
            Feedback::approve(&session.id, layer.index)
        };
        let effect = apply_feedback(&mut session, &feedback)?;
        println!("  {:?} -> {:?}", effect.action, effect.state_after);
        outcome = pipeline.drive(&mut session)?;
    }

    let answer = session.final_answer.expect("finished");
    println!("\n{}\nquality {:.2}", answer.text, answer.quality);
    Ok(())
}
