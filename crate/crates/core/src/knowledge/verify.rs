use crate::engine::{
    ClaimStatus, Evidence, PartialReasoning, VerdictPolicy, VerdictSource, VerificationVerdict,
    Verifier,
};

use super::FactStore;

/// Checks every claim of a partial reasoning against the store.
///
/// Claims without a structured assertion are `Unknown`. Every claim gets
/// exactly one status and one evidence line.
pub fn verify_partial(
    store: &FactStore,
    partial: &PartialReasoning,
    policy: VerdictPolicy,
) -> VerificationVerdict {
    let mut per_claim = std::collections::BTreeMap::new();
    let mut evidence = Vec::with_capacity(partial.claims.len());
    for claim in &partial.claims {
        let (status, text) = match &claim.assertion {
            Some(a) => {
                let found = store.explain(a);
                (found.status, found.evidence)
            }
            None => (ClaimStatus::Unknown, "no structured assertion".to_string()),
        };
        per_claim.insert(claim.id.clone(), status);
        evidence.push(Evidence {
            claim_id: claim.id.clone(),
            text,
        });
    }
    let contradicted = per_claim
        .values()
        .filter(|s| **s == ClaimStatus::Contradicted)
        .count();
    VerificationVerdict {
        layer_index: partial.layer_index,
        per_claim,
        aggregate: policy.decide(contradicted),
        evidence,
        source: VerdictSource::Knowledge,
    }
}

impl Verifier for FactStore {
    fn verify(&self, partial: &PartialReasoning, policy: VerdictPolicy) -> VerificationVerdict {
        verify_partial(self, partial, policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::parse_claims;
    use crate::engine::Aggregate;
    use crate::knowledge::load_store;

    fn store() -> FactStore {
        load_store(
            "@functional patent_status\n\
             company_x | patent_status | pending | true\n\
             company_x | sector | solar | true\n\
             market | demand | rising | true\n",
        )
        .unwrap()
    }

    fn partial(text: &str, attempt: u32) -> PartialReasoning {
        PartialReasoning {
            layer_index: 0,
            narrative: text.into(),
            claims: parse_claims(text).claims,
            attempt,
        }
    }

    const OPEN: VerdictPolicy = VerdictPolicy { budget_remains: true };
    const SPENT: VerdictPolicy = VerdictPolicy { budget_remains: false };

    #[test]
    fn two_supported_claims_accept() {
        let p = partial("CLAIM: company_x | sector | solar\nCLAIM: market | demand | rising", 1);
        let v = verify_partial(&store(), &p, OPEN);
        assert_eq!(v.aggregate, Aggregate::Accepted);
        assert_eq!(v.count(ClaimStatus::Supported), 2);
        assert_eq!(v.source, VerdictSource::Knowledge);
    }

    #[test]
    fn contradiction_needs_refinement_while_budget_remains() {
        let p = partial("CLAIM: company_x | patent_status | granted", 1);
        let v = verify_partial(&store(), &p, OPEN);
        assert_eq!(v.per_claim["c1"], ClaimStatus::Contradicted);
        assert_eq!(v.aggregate, Aggregate::NeedsRefinement);
        assert!(v.evidence[0].text.contains("company_x | patent_status | pending | true"));
        assert_eq!(verify_partial(&store(), &p, SPENT).aggregate, Aggregate::Rejected);
    }

    #[test]
    fn zero_claims_is_vacuously_accepted() {
        let v = verify_partial(&store(), &partial("just prose", 1), OPEN);
        assert!(v.per_claim.is_empty());
        assert_eq!(v.aggregate, Aggregate::Accepted);
    }

    #[test]
    fn unknown_does_not_block() {
        let p = partial("CLAIM: moon | made_of | cheese", 1);
        let v = verify_partial(&store(), &p, OPEN);
        assert_eq!(v.per_claim["c1"], ClaimStatus::Unknown);
        assert_eq!(v.aggregate, Aggregate::Accepted);
        assert_eq!(v.evidence[0].text, "no matching fact");
    }

    #[test]
    fn prose_claims_without_assertions_are_unknown() {
        let mut p = partial("", 1);
        p.claims.push(crate::engine::Claim {
            id: "c1".into(),
            statement: "the sky is blue".into(),
            assertion: None,
            confidence: Some(0.9),
        });
        let v = verify_partial(&store(), &p, OPEN);
        assert_eq!(v.per_claim["c1"], ClaimStatus::Unknown);
    }
}
