//! Writes a session's event log as JSON Lines, reads it back, replays it
//! and audits the result.

use layercot::engine::{audit, read_jsonl, write_jsonl, EngineConfig, Session};
use layercot::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = scenarios::bundled("agile-team")?;
    let (session, _) = scenario.pipeline().start(scenario.query(), EngineConfig::default())?;

    let mut log = Vec::new();
    write_jsonl(&mut log, &session.events)?;
    print!("{}", String::from_utf8_lossy(&log));

    let replayed = Session::replay(read_jsonl(log.as_slice())?)?;
    let same = serde_json::to_string(&replayed)? == serde_json::to_string(&session)?;
    println!("\nreplay identical: {same}");
    println!("violations: {:?}", audit(&replayed));
    Ok(())
}
