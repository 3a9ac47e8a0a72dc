//! Immutable fact store and the automatic verification path.
//!
//! Fact files are line-oriented UTF-8:
//!
//! ```text
//! # comment
//! @functional patent_status
//! company_x | patent_status | pending | true
//! company_x | listed_on | nyse | false
//! ```
//!
//! A predicate declared `@functional` admits at most one true object per
//! subject, so a claim naming a different object is contradicted.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Assertion, ClaimStatus};

mod verify;

pub use verify::verify_partial;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub polarity: bool,
}

impl Fact {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        polarity: bool,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            polarity,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("subject", &self.subject),
            ("predicate", &self.predicate),
            ("object", &self.object),
        ] {
            if value.is_empty() {
                return Err(format!("{name} is empty"));
            }
            if value.contains(['|', '\n', '\r']) {
                return Err(format!("{name} contains `|` or a line break"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | {} | {} | {}",
            self.subject, self.predicate, self.object, self.polarity
        )
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Consistency { line: usize, message: String },
    #[error("reading fact file: {0}")]
    Io(String),
}

type Key = (String, String, String);

/// Set of polarity-tagged triples plus the functional-predicate
/// declarations. Read-only after construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactStore {
    facts: Vec<Fact>,
    by_triple: HashMap<Key, usize>,
    /// (subject, predicate) → index of the true fact, functional predicates only.
    functional_value: HashMap<(String, String), usize>,
    functional: BTreeSet<String>,
    /// Source line (or input position) of each fact, for error messages.
    origin: Vec<usize>,
}

/// Result of a lookup, with a human-readable justification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup {
    pub status: ClaimStatus,
    pub evidence: String,
}

impl FactStore {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a store from facts and functional declarations, enforcing
    /// the consistency rules. Errors carry the 1-based position of the
    /// offending fact.
    pub fn from_facts<I, P>(facts: I, functional: P) -> Result<Self, KnowledgeError>
    where
        I: IntoIterator<Item = Fact>,
        P: IntoIterator<Item = String>,
    {
        let mut store = Self {
            functional: functional.into_iter().collect(),
            ..Self::default()
        };
        for (i, fact) in facts.into_iter().enumerate() {
            store.insert(fact, i + 1)?;
        }
        store.check_functional()?;
        Ok(store)
    }

    fn insert(&mut self, fact: Fact, line: usize) -> Result<(), KnowledgeError> {
        fact.validate()
            .map_err(|message| KnowledgeError::Parse { line, message })?;
        let key = (fact.subject.clone(), fact.predicate.clone(), fact.object.clone());
        if let Some(&existing) = self.by_triple.get(&key) {
            if self.facts[existing].polarity != fact.polarity {
                return Err(KnowledgeError::Consistency {
                    line,
                    message: format!("`{fact}` conflicts with `{}`", self.facts[existing]),
                });
            }
            return Ok(());
        }
        self.by_triple.insert(key, self.facts.len());
        self.facts.push(fact);
        self.origin.push(line);
        Ok(())
    }

    fn check_functional(&mut self) -> Result<(), KnowledgeError> {
        self.functional_value.clear();
        for (i, fact) in self.facts.iter().enumerate() {
            if !fact.polarity || !self.functional.contains(&fact.predicate) {
                continue;
            }
            let sp = (fact.subject.clone(), fact.predicate.clone());
            if let Some(&other) = self.functional_value.get(&sp) {
                return Err(KnowledgeError::Consistency {
                    line: self.origin[i],
                    message: format!(
                        "functional predicate `{}` has two true objects for `{}`: `{}` and `{}`",
                        fact.predicate, fact.subject, self.facts[other].object, fact.object
                    ),
                });
            }
            self.functional_value.insert(sp, i);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn functional_predicates(&self) -> impl Iterator<Item = &str> {
        self.functional.iter().map(String::as_str)
    }

    pub fn is_functional(&self, predicate: &str) -> bool {
        self.functional.contains(predicate)
    }

    /// Exact-match status of an assertion. Fields are trimmed, comparison
    /// is case-sensitive.
    pub fn lookup(&self, assertion: &Assertion) -> ClaimStatus {
        self.explain(assertion).status
    }

    pub fn explain(&self, assertion: &Assertion) -> Lookup {
        let s = assertion.subject.trim();
        let p = assertion.predicate.trim();
        let o = assertion.object.trim();
        let key = (s.to_string(), p.to_string(), o.to_string());
        if let Some(&i) = self.by_triple.get(&key) {
            let fact = &self.facts[i];
            return if fact.polarity {
                Lookup {
                    status: ClaimStatus::Supported,
                    evidence: format!("matches fact `{fact}`"),
                }
            } else {
                Lookup {
                    status: ClaimStatus::Contradicted,
                    evidence: format!("negated by fact `{fact}`"),
                }
            };
        }
        if self.functional.contains(p) {
            if let Some(&i) = self.functional_value.get(&(key.0, key.1)) {
                return Lookup {
                    status: ClaimStatus::Contradicted,
                    evidence: format!(
                        "`{p}` is functional and the store holds `{}`",
                        self.facts[i]
                    ),
                };
            }
        }
        Lookup {
            status: ClaimStatus::Unknown,
            evidence: "no matching fact".into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KnowledgeError::Io(format!("{}: {e}", path.display())))?;
        load_store(&text)
    }
}

/// Parses a fact document.
pub fn load_store(document: &str) -> Result<FactStore, KnowledgeError> {
    let mut store = FactStore::default();
    for (i, raw) in document.lines().enumerate() {
        let line = i + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("@functional") {
            let predicate = rest.trim();
            if !rest.starts_with(char::is_whitespace) || predicate.is_empty() {
                return Err(KnowledgeError::Parse {
                    line,
                    message: "expected `@functional <predicate>`".into(),
                });
            }
            if predicate.contains(char::is_whitespace) || predicate.contains('|') {
                return Err(KnowledgeError::Parse {
                    line,
                    message: format!("invalid predicate name `{predicate}`"),
                });
            }
            store.functional.insert(predicate.to_string());
            continue;
        }
        let fields: Vec<&str> = content.split('|').map(str::trim).collect();
        let [subject, predicate, object, polarity] = fields.as_slice() else {
            return Err(KnowledgeError::Parse {
                line,
                message: format!("expected 4 `|`-separated fields, found {}", fields.len()),
            });
        };
        let polarity = match *polarity {
            "true" => true,
            "false" => false,
            other => {
                return Err(KnowledgeError::Parse {
                    line,
                    message: format!("polarity must be `true` or `false`, found `{other}`"),
                })
            }
        };
        store.insert(Fact::new(*subject, *predicate, *object, polarity), line)?;
    }
    store.check_functional()?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MEDICAL: &str = "\
# regional health snapshot
@functional strep_rate
local_region | strep_rate | high | true
local_region | flu_rate | low | true
";

    #[test]
    fn loads_medical_snapshot() {
        let store = load_store(MEDICAL).unwrap();
        assert_eq!(store.len(), 2);
        assert!(store.facts().contains(&Fact::new("local_region", "strep_rate", "high", true)));
        assert_eq!(
            store.lookup(&Assertion::new("local_region", "strep_rate", "high")),
            ClaimStatus::Supported
        );
    }

    #[test]
    fn empty_document() {
        assert!(load_store("").unwrap().is_empty());
        assert!(load_store("# only a comment\n\n   \n").unwrap().is_empty());
    }

    #[test]
    fn direct_contradiction_is_rejected() {
        let err = load_store("x | p | a | true\nx | p | a | false\n").unwrap_err();
        assert_eq!(
            err,
            KnowledgeError::Consistency {
                line: 2,
                message: "`x | p | a | false` conflicts with `x | p | a | true`".into()
            }
        );
    }

    #[test]
    fn functional_violation_is_rejected_with_source_line() {
        let doc = "# c\nx | p | a | true\n\nx | q | z | true\n@functional p\nx | p | b | true\n";
        match load_store(doc) {
            Err(KnowledgeError::Consistency { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(
            load_store("a | b | c | true\na | b | c\n").unwrap_err(),
            KnowledgeError::Parse {
                line: 2,
                message: "expected 4 `|`-separated fields, found 3".into()
            }
        );
        assert!(matches!(
            load_store("a | b | c | yes"),
            Err(KnowledgeError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_store("a |  | c | true"),
            Err(KnowledgeError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_store("@functional"),
            Err(KnowledgeError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_store("@functionalp"),
            Err(KnowledgeError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn functional_predicate_contradicts_other_objects() {
        let store = load_store("@functional patent_status\ncompany_x | patent_status | pending | true\n").unwrap();
        assert_eq!(
            store.lookup(&Assertion::new("company_x", "patent_status", "granted")),
            ClaimStatus::Contradicted
        );
        assert_eq!(
            store.lookup(&Assertion::new("company_y", "patent_status", "granted")),
            ClaimStatus::Unknown
        );
    }

    #[test]
    fn negative_fact_contradicts() {
        let store = load_store("a | b | c | false").unwrap();
        let l = store.explain(&Assertion::new(" a", "b ", "c"));
        assert_eq!(l.status, ClaimStatus::Contradicted);
        assert!(l.evidence.contains("a | b | c | false"));
    }

    #[test]
    fn unknown_and_case_sensitive() {
        let store = load_store(MEDICAL).unwrap();
        let l = store.explain(&Assertion::new("unheard_subject", "p", "o"));
        assert_eq!(l.status, ClaimStatus::Unknown);
        assert_eq!(l.evidence, "no matching fact");
        assert_eq!(
            store.lookup(&Assertion::new("Local_Region", "strep_rate", "high")),
            ClaimStatus::Unknown
        );
    }

    #[test]
    fn duplicate_same_polarity_is_merged() {
        let store = load_store("a | b | c | true\na | b | c | true\n").unwrap();
        assert_eq!(store.len(), 1);
    }
}
