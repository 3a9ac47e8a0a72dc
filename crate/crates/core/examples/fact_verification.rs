//! Parses claims out of free text and checks them against a fact file.

use layercot::agents::parse_claims;
use layercot::engine::{EngineConfig, PartialReasoning, VerdictPolicy};
use layercot::knowledge::{load_store, verify_partial};

const FACTS: &str = "\
# filings
@functional status
patent | status | pending | true
company_x | listed_on | nasdaq | true
company_x | listed_on | nyse | false
";

const DRAFT: &str = "\
Company X is listed and its patent has been granted.
CLAIM: company_x | listed_on | nasdaq
CLAIM: company_x | listed_on | nyse
CLAIM: patent | status | granted
CLAIM: company_x | founded | 2012
CLAIM: this line is not a triple
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = load_store(FACTS)?;
    let parsed = parse_claims(DRAFT);
    for warning in &parsed.warnings {
        println!("warning: {warning}");
    }
    let partial = PartialReasoning {
        layer_index: 0,
        narrative: DRAFT.into(),
        claims: parsed.claims,
        attempt: 1,
    };
    let policy = VerdictPolicy::for_attempt(&EngineConfig::default(), partial.attempt);
    let verdict = verify_partial(&store, &partial, policy);
    for claim in &partial.claims {
        let evidence = verdict
            .evidence
            .iter()
            .find(|e| e.claim_id == claim.id)
            .map_or("", |e| e.text.as_str());
        println!("{:<40} {:<13?} {evidence}", claim.statement, verdict.per_claim[&claim.id]);
    }
    println!("aggregate: {:?}", verdict.aggregate);
    Ok(())
}
