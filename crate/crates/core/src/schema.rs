//! Canonical-form schema: a bijection between discrete intent labels and
//! short descriptive phrases, grouped by domain, plus a linter for the
//! phrasing pitfalls that hurt cross-domain transfer.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaEntry {
    pub intent: String,
    pub canonical: String,
    pub domain: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalSchema {
    entries: Vec<SchemaEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaError {
    Empty,
    DuplicateIntent(String),
    DuplicateCanonical(String),
    EmptyField { intent: String },
    NotLowercaseWords { intent: String },
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaError::Empty => write!(f, "schema has no entries"),
            SchemaError::DuplicateIntent(i) => write!(f, "duplicate intent label {i:?}"),
            SchemaError::DuplicateCanonical(c) => {
                write!(f, "duplicate canonical form {c:?} breaks the bijection")
            }
            SchemaError::EmptyField { intent } => {
                write!(f, "entry {intent:?} has an empty field")
            }
            SchemaError::NotLowercaseWords { intent } => {
                write!(f, "canonical form for {intent:?} is not lowercase words")
            }
        }
    }
}

impl CanonicalSchema {
    /// Validates the label/canonical bijection and phrase shape.
    pub fn new(entries: Vec<SchemaEntry>) -> Result<Self, SchemaError> {
        if entries.is_empty() {
            return Err(SchemaError::Empty);
        }
        for (i, e) in entries.iter().enumerate() {
            if e.intent.is_empty() || e.canonical.is_empty() || e.domain.is_empty() {
                return Err(SchemaError::EmptyField {
                    intent: e.intent.clone(),
                });
            }
            let renormalized = e
                .canonical
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            if renormalized != e.canonical || e.canonical.chars().any(|c| c.is_uppercase()) {
                return Err(SchemaError::NotLowercaseWords {
                    intent: e.intent.clone(),
                });
            }
            for other in &entries[..i] {
                if other.intent == e.intent {
                    return Err(SchemaError::DuplicateIntent(e.intent.clone()));
                }
                if other.canonical == e.canonical {
                    return Err(SchemaError::DuplicateCanonical(e.canonical.clone()));
                }
            }
        }
        Ok(CanonicalSchema { entries })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn canonical_for(&self, intent: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.intent == intent)
            .map(|e| e.canonical.as_str())
    }

    pub fn intent_for_canonical(&self, canonical: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.canonical == canonical)
            .map(|e| e.intent.as_str())
    }

    pub fn domains(&self) -> Vec<&str> {
        let mut v: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !v.contains(&e.domain.as_str()) {
                v.push(&e.domain);
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LintConfig {
    /// A token covering more than this fraction of one domain's forms is a
    /// spurious-correlation candidate.
    pub spurious_coverage: f64,
    /// Forms longer than this many words are flagged verbose.
    pub max_words: usize,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            spurious_coverage: 0.8,
            max_words: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LintWarning {
    /// `token` saturates `domain`'s forms but never appears in the
    /// analogous (same-verb) forms of the adjacent domains listed.
    SpuriousToken {
        domain: String,
        token: String,
        missing_in: Vec<String>,
    },
    Verbose { intent: String, words: usize },
    Terse { intent: String },
    VerbInconsistency { domain: String, verbs: Vec<String> },
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LintWarning::SpuriousToken {
                domain,
                token,
                missing_in,
            } => write!(
                f,
                "token {token:?} saturates domain {domain:?} but is absent from analogous forms in {missing_in:?} (spurious-correlation risk)"
            ),
            LintWarning::Verbose { intent, words } => {
                write!(f, "canonical form for {intent:?} is verbose ({words} words)")
            }
            LintWarning::Terse { intent } => {
                write!(f, "canonical form for {intent:?} is a single word (too terse)")
            }
            LintWarning::VerbInconsistency { domain, verbs } => write!(
                f,
                "domain {domain:?} mixes verbs {verbs:?} across its search-type intents"
            ),
        }
    }
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn first_word(s: &str) -> &str {
    words(s).first().copied().unwrap_or("")
}

/// Crude stem match: "flights" identifies domain "flight", "bank"
/// identifies "banking".
fn is_domain_token(token: &str, domain: &str) -> bool {
    token.starts_with(domain) || domain.starts_with(token)
}

/// Advisory phrasing checks; never fails.
pub fn lint_schema(schema: &CanonicalSchema, cfg: &LintConfig) -> Vec<LintWarning> {
    let mut warnings = Vec::new();
    let domains = schema.domains();

    for e in schema.entries() {
        let n = words(&e.canonical).len();
        if n > cfg.max_words {
            warnings.push(LintWarning::Verbose {
                intent: e.intent.clone(),
                words: n,
            });
        } else if n == 1 {
            warnings.push(LintWarning::Terse {
                intent: e.intent.clone(),
            });
        }
    }

    // verb consistency among a domain's search-type intents
    for &domain in &domains {
        let mut verbs: Vec<String> = Vec::new();
        for e in schema.entries().iter().filter(|e| e.domain == domain) {
            if e.intent.contains("search") || e.intent.contains("find") {
                let v = first_word(&e.canonical).to_string();
                if !verbs.contains(&v) {
                    verbs.push(v);
                }
            }
        }
        if verbs.len() > 1 {
            warnings.push(LintWarning::VerbInconsistency {
                domain: domain.to_string(),
                verbs,
            });
        }
    }

    // spurious saturating tokens vs adjacent domains (shared verbs)
    for &domain in &domains {
        let forms: Vec<&str> = schema
            .entries()
            .iter()
            .filter(|e| e.domain == domain)
            .map(|e| e.canonical.as_str())
            .collect();
        let verbs: Vec<&str> = forms.iter().map(|f| first_word(f)).collect();
        let mut tokens: Vec<&str> = Vec::new();
        for f in &forms {
            for w in words(f) {
                if !tokens.contains(&w) {
                    tokens.push(w);
                }
            }
        }
        for token in tokens {
            if is_domain_token(token, domain) {
                continue;
            }
            let coverage = forms.iter().filter(|f| words(f).contains(&token)).count() as f64
                / forms.len() as f64;
            if coverage <= cfg.spurious_coverage {
                continue;
            }
            let mut missing_in: Vec<String> = Vec::new();
            for &other in &domains {
                if other == domain {
                    continue;
                }
                // analogous forms: the other domain's forms sharing a verb
                let analogous: Vec<&str> = schema
                    .entries()
                    .iter()
                    .filter(|e| e.domain == other && verbs.contains(&first_word(&e.canonical)))
                    .map(|e| e.canonical.as_str())
                    .collect();
                if analogous.is_empty() {
                    continue; // not adjacent
                }
                if !analogous.iter().any(|f| words(f).contains(&token)) {
                    missing_in.push(other.to_string());
                }
            }
            if !missing_in.is_empty() {
                warnings.push(LintWarning::SpuriousToken {
                    domain: domain.to_string(),
                    token: token.to_string(),
                    missing_in,
                });
            }
        }
    }

    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn entry(intent: &str, canonical: &str, domain: &str) -> SchemaEntry {
        SchemaEntry {
            intent: intent.to_string(),
            canonical: canonical.to_string(),
            domain: domain.to_string(),
        }
    }

    #[test]
    fn bijection_is_enforced() {
        let dup_intent = CanonicalSchema::new(vec![
            entry("a", "do one thing", "d"),
            entry("a", "do another thing", "d"),
        ]);
        assert!(matches!(dup_intent, Err(SchemaError::DuplicateIntent(_))));
        let dup_canonical = CanonicalSchema::new(vec![
            entry("a", "do the thing", "d"),
            entry("b", "do the thing", "d"),
        ]);
        assert!(matches!(
            dup_canonical,
            Err(SchemaError::DuplicateCanonical(_))
        ));
    }

    #[test]
    fn uppercase_canonical_is_rejected() {
        let r = CanonicalSchema::new(vec![entry("a", "Do The Thing", "d")]);
        assert!(matches!(r, Err(SchemaError::NotLowercaseWords { .. })));
    }

    #[test]
    fn spurious_token_is_flagged_against_adjacent_domain() {
        // the "ticket" case: all flight forms carry "tickets", the bus
        // domain shares verbs but its forms never say "tickets"
        let schema = CanonicalSchema::new(vec![
            entry("search_flight_oneway", "search tickets for flight one way", "flight"),
            entry("search_flight_roundtrip", "search tickets for flight roundtrip", "flight"),
            entry("buy_flight_roundtrip", "buy tickets for flight roundtrip", "flight"),
            entry("search_bus_oneway", "search for bus one way", "bus"),
            entry("search_bus_roundtrip", "search for bus roundtrip", "bus"),
            entry("buy_bus_roundtrip", "buy bus roundtrip", "bus"),
        ])
        .unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(
            warnings.iter().any(|w| matches!(
                w,
                LintWarning::SpuriousToken { domain, token, .. }
                    if domain == "flight" && token == "tickets"
            )),
            "expected a spurious-token warning on \"tickets\", got {warnings:?}"
        );
    }

    #[test]
    fn uniform_book_search_schema_is_clean() {
        let schema = CanonicalSchema::new(vec![
            entry("book_flight", "book a flight", "flight"),
            entry("search_flight", "search for flight", "flight"),
            entry("book_bus", "book a bus", "bus"),
            entry("search_bus", "search for bus", "bus"),
        ])
        .unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(warnings.is_empty(), "clean schema produced {warnings:?}");
    }

    #[test]
    fn verbosity_threshold_fires() {
        let schema = CanonicalSchema::new(vec![entry(
            "a",
            "search for a very long canonical form that rambles on and on",
            "d",
        )])
        .unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(matches!(
            warnings.as_slice(),
            [LintWarning::Verbose { words: 12, .. }]
        ));
    }

    #[test]
    fn single_word_form_is_terse() {
        let schema = CanonicalSchema::new(vec![entry("a", "transfer", "d")]).unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(matches!(warnings.as_slice(), [LintWarning::Terse { .. }]));
    }

    #[test]
    fn mixed_search_verbs_are_flagged() {
        let schema = CanonicalSchema::new(vec![
            entry("search_hotel", "search for hotel", "hotel"),
            entry("search_hotel_deals", "find hotel deals", "hotel"),
        ])
        .unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(warnings
            .iter()
            .any(|w| matches!(w, LintWarning::VerbInconsistency { .. })));
    }
}
