//! Synthetic multi-domain assistant world: schema + labeled utterances
//! expanded from slot templates, plus the unlabeled pretraining corpus.
//!
//! The default world has six domains. flight/bus form the adjacent pair
//! (shared search/buy verb structure), iot and media are isolated (no
//! verb or noun overlap with anything else). Ablation mode injects the
//! spurious "tickets" token into every flight canonical while bus and
//! flight utterances keep mentioning tickets, which is the failure the
//! schema linter exists to catch.
//!
//! The pretraining corpus contains only unlabeled text: utterance-like
//! sentences from every domain plus "echo" lines
//! `<sentence> intent: <ordered subset of its content words>` that teach
//! the format and generic in-context copying. No gold utterance-to-
//! canonical pair ever appears in it.

use crate::data::{Dataset, LabeledUtterance};
use crate::rng::Rng;
use crate::schema::{CanonicalSchema, SchemaEntry};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotDef {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntentSpec {
    pub label: String,
    pub canonical: String,
    /// Alternative phrasing used in ablation mode (spurious-token study).
    pub canonical_ablation: Option<String>,
    pub templates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub name: String,
    pub intents: Vec<IntentSpec>,
    pub slots: Vec<SlotDef>,
    /// Relative share of echo (summarization) lines this domain gets in
    /// the pretraining corpus, in percent of the default. Mirrors how
    /// unevenly real pretraining text covers domains.
    pub echo_weight_pct: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemaMode {
    Clean,
    Ablation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub domains: Vec<DomainSpec>,
    pub mode: SchemaMode,
    pub utterances_per_intent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthError {
    UndefinedSlot { template: String, slot: String },
    UnclosedBrace { template: String },
    EmptyWorld,
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::UndefinedSlot { template, slot } => {
                write!(f, "template {template:?} references undefined slot {slot:?}")
            }
            SynthError::UnclosedBrace { template } => {
                write!(f, "template {template:?} has an unclosed slot brace")
            }
            SynthError::EmptyWorld => write!(f, "world spec has no domains or intents"),
        }
    }
}

/// Words never treated as content when building echo-line answers.
pub const STOPWORDS: &[&str] = &[
    "i", "a", "an", "the", "to", "for", "my", "me", "in", "at", "of", "is", "it", "and", "with",
    "from", "please", "you", "can", "want", "need", "would", "like", "do", "get", "show", "some",
    "that", "this", "going", "right", "now", "by", "what", "how", "much",
];

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w)
}

fn expand_template(
    template: &str,
    slots: &[SlotDef],
    rng: &mut Rng,
) -> Result<String, SynthError> {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| SynthError::UnclosedBrace {
            template: template.to_string(),
        })?;
        let name = &after[..close];
        let def = slots
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| SynthError::UndefinedSlot {
                template: template.to_string(),
                slot: name.to_string(),
            })?;
        out.push_str(rng.choose(&def.values));
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Deterministic expansion of the world spec into a labeled dataset and
/// its canonical schema (clean or ablation phrasing per `spec.mode`).
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Dataset, CanonicalSchema), SynthError> {
    if spec.domains.is_empty() || spec.domains.iter().all(|d| d.intents.is_empty()) {
        return Err(SynthError::EmptyWorld);
    }
    let root = Rng::new(seed);
    let mut dataset: Dataset = Vec::new();
    let mut entries: Vec<SchemaEntry> = Vec::new();
    for domain in &spec.domains {
        for intent in &domain.intents {
            let canonical = match spec.mode {
                SchemaMode::Clean => intent.canonical.clone(),
                SchemaMode::Ablation => intent
                    .canonical_ablation
                    .clone()
                    .unwrap_or_else(|| intent.canonical.clone()),
            };
            entries.push(SchemaEntry {
                intent: intent.label.clone(),
                canonical,
                domain: domain.name.clone(),
            });
            let mut rng = root.substream("synth/utterances").substream(&intent.label);
            for j in 0..spec.utterances_per_intent {
                let template = &intent.templates[j % intent.templates.len()];
                let text = expand_template(template, &domain.slots, &mut rng)?;
                dataset.push(LabeledUtterance {
                    text,
                    intent: intent.label.clone(),
                    domain: domain.name.clone(),
                });
            }
        }
    }
    let schema = CanonicalSchema::new(entries).expect("world schema must be valid");
    Ok((dataset, schema))
}

/// How echo-line answers are built from a sentence's content words.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EchoStyle {
    /// First content word plus an ordered random subset of the rest.
    OrderedSubset,
    /// Every content word, in order (deterministic copy target).
    FullContent,
    /// First content word plus a shuffled random subset of the rest.
    AnchoredUnordered,
}

/// Unlabeled pretraining corpus: utterance-like lines plus echo lines.
/// Independent of `spec.mode` (canonical phrasing never enters it).
pub fn generate_pretrain_corpus(
    spec: &SyntheticSpec,
    seed: u64,
    utterance_lines_per_intent: usize,
    echo_lines: usize,
) -> Result<Vec<String>, SynthError> {
    generate_pretrain_corpus_styled(
        spec,
        seed,
        utterance_lines_per_intent,
        echo_lines,
        0,
        EchoStyle::FullContent,
    )
}

/// `copy_drill_lines` adds echo lines over random word sequences drawn
/// from the world vocabulary: pure in-context copy exercises that
/// strengthen the induction behaviour the whole method leans on.
pub fn generate_pretrain_corpus_styled(
    spec: &SyntheticSpec,
    seed: u64,
    utterance_lines_per_intent: usize,
    echo_lines: usize,
    copy_drill_lines: usize,
    style: EchoStyle,
) -> Result<Vec<String>, SynthError> {
    let root = Rng::new(seed);
    let mut corpus: Vec<String> = Vec::new();



    for domain in &spec.domains {
        for intent in &domain.intents {
            let mut rng = root.substream("corpus/utterances").substream(&intent.label);
            for j in 0..utterance_lines_per_intent {
                let template = &intent.templates[j % intent.templates.len()];
                corpus.push(expand_template(template, &domain.slots, &mut rng)?);
            }
        }
    }

    // flat (domain, intent) list; echo share follows domain weights
    let flat: Vec<(&DomainSpec, &IntentSpec)> = spec
        .domains
        .iter()
        .flat_map(|d| d.intents.iter().map(move |i| (d, i)))
        .collect();
    if flat.is_empty() {
        return Err(SynthError::EmptyWorld);
    }
    let cumulative: Vec<u64> = flat
        .iter()
        .scan(0u64, |acc, (d, _)| {
            *acc += u64::from(d.echo_weight_pct.max(1));
            Some(*acc)
        })
        .collect();
    let total_weight = *cumulative.last().unwrap();
    let mut rng = root.substream("corpus/echo");
    for _ in 0..echo_lines {
        let r = rng.next_u64() % total_weight;
        let pick = cumulative.partition_point(|&c| c <= r);
        let (domain, intent) = flat[pick];
        let template = &intent.templates[rng.below(intent.templates.len())];
        let sentence = expand_template(template, &domain.slots, &mut rng)?;
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let mut content: Vec<usize> = (0..words.len())
            .filter(|&i| !is_stopword(words[i]))
            .collect();
        if content.len() < 2 {
            content = (0..words.len()).collect();
        }
        // answer anchored on the first content word (usually the action)
        let tail = content.len() - 1;
        let mut answer: Vec<&str> = alloc::vec![words[content[0]]];
        match style {
            EchoStyle::FullContent => {
                answer.extend(content[1..].iter().map(|&i| words[i]));
            }
            EchoStyle::OrderedSubset => {
                let extra = if tail == 0 { 0 } else { 1 + rng.below(tail.min(4)) };
                let mut picked = rng.sample_indices(tail, extra);
                picked.sort_unstable();
                answer.extend(picked.iter().map(|&i| words[content[i + 1]]));
            }
            EchoStyle::AnchoredUnordered => {
                let extra = if tail == 0 { 0 } else { 1 + rng.below(tail.min(4)) };
                let picked = rng.sample_indices(tail, extra);
                answer.extend(picked.iter().map(|&i| words[content[i + 1]]));
            }
        }
        corpus.push(alloc::format!("{sentence} intent: {}", answer.join(" ")));
    }

    // copy drills: random word sequences with the same summarize-after-
    // marker shape; trains token-faithful copying on arbitrary contexts
    let mut vocab: alloc::collections::BTreeSet<String> = alloc::collections::BTreeSet::new();
    for d in &spec.domains {
        for i in &d.intents {
            for t in &i.templates {
                for w in t.split_whitespace() {
                    if !w.contains('{') && !w.contains('}') {
                        vocab.insert(w.to_string());
                    }
                }
            }
        }
        for sl in &d.slots {
            for v in &sl.values {
                vocab.insert(v.clone());
            }
        }
    }
    let vocab: Vec<String> = vocab.into_iter().collect();
    let mut drill_rng = root.substream("corpus/drills");
    for _ in 0..copy_drill_lines {
        let len = 4 + drill_rng.below(6);
        let words: Vec<&str> = (0..len)
            .map(|_| vocab[drill_rng.below(vocab.len())].as_str())
            .collect();
        let content: Vec<&str> = words
            .iter()
            .copied()
            .filter(|w| !is_stopword(w))
            .collect();
        let answer = if content.is_empty() { words.clone() } else { content };
        corpus.push(alloc::format!(
            "{} intent: {}",
            words.join(" "),
            answer.join(" ")
        ));
    }
    Ok(corpus)
}

const DEFAULT_ECHO_WEIGHT: u32 = 100;

fn slot(name: &str, values: &[&str]) -> SlotDef {
    SlotDef {
        name: name.to_string(),
        values: values.iter().map(|v| v.to_string()).collect(),
    }
}

fn intent(label: &str, canonical: &str, templates: &[&str]) -> IntentSpec {
    IntentSpec {
        label: label.to_string(),
        canonical: canonical.to_string(),
        canonical_ablation: None,
        templates: templates.iter().map(|t| t.to_string()).collect(),
    }
}

fn intent_abl(label: &str, canonical: &str, ablation: &str, templates: &[&str]) -> IntentSpec {
    IntentSpec {
        label: label.to_string(),
        canonical: canonical.to_string(),
        canonical_ablation: Some(ablation.to_string()),
        templates: templates.iter().map(|t| t.to_string()).collect(),
    }
}

/// The six-domain default world used by the experiment harness.
pub fn default_world() -> SyntheticSpec {
    let banking = DomainSpec {
        echo_weight_pct: DEFAULT_ECHO_WEIGHT,
        name: "banking".to_string(),
        slots: vec![
            slot("account_type", &["savings", "checking", "joint"]),
            slot("amount", &["twenty", "fifty", "hundred", "thousand"]),
            slot("bill_type", &["water", "electric", "phone", "internet"]),
        ],
        intents: vec![
            intent(
                "transfer_money",
                "transfer money to bank account",
                &[
                    "i want to transfer money",
                    "transfer money to my {account_type} account",
                    "transfer {amount} dollars to my {account_type} account",
                    "i need to transfer money to the bank",
                    "please transfer money into my {account_type} account",
                    "move {amount} dollars to my {account_type} account",
                ],
            ),
            intent(
                "check_balance",
                "check balance in bank account",
                &[
                    "check the balance in my {account_type} account",
                    "check my {account_type} account balance",
                    "i want to check my balance",
                    "check how much is in my {account_type} account",
                    "what is the balance of my {account_type} account",
                ],
            ),
            intent(
                "pay_bill",
                "pay bill from bank account",
                &[
                    "pay my {bill_type} bill",
                    "pay the {bill_type} bill from my {account_type} account",
                    "i want to pay the {bill_type} bill",
                    "pay {amount} dollars for the {bill_type} bill",
                    "settle my {bill_type} bill today",
                ],
            ),
            intent(
                "open_account",
                "open new bank account",
                &[
                    "open a new {account_type} account",
                    "i want to open a new {account_type} account",
                    "open an account at the bank for me",
                    "i need to open a new account",
                ],
            ),
        ],
    };

    let flight = DomainSpec {
        echo_weight_pct: DEFAULT_ECHO_WEIGHT,
        name: "flight".to_string(),
        slots: vec![slot(
            "city",
            &["denver", "boston", "chicago", "portland", "austin", "seattle"],
        )],
        intents: vec![
            intent_abl(
                "search_flight_oneway",
                "search one way flight",
                "search tickets for flight one way",
                &[
                    "search for a one way flight to {city}",
                    "search one way flights to {city}",
                    "i want a one way flight to {city}",
                    "search for flights going one way to {city}",
                    "find me a one way flight to {city}",
                    "i need a one way flight ticket to {city}",
                ],
            ),
            intent_abl(
                "search_flight_roundtrip",
                "search roundtrip flight",
                "search tickets for flight roundtrip",
                &[
                    "search for a roundtrip flight to {city}",
                    "search roundtrip flights to {city}",
                    "i want a roundtrip flight to {city}",
                    "search for a return flight to {city}",
                    "find me a roundtrip flight ticket to {city}",
                ],
            ),
            intent_abl(
                "buy_flight_roundtrip",
                "buy roundtrip flight",
                "buy tickets for flight roundtrip",
                &[
                    "buy a roundtrip flight to {city}",
                    "buy me a roundtrip flight ticket to {city}",
                    "i want to buy a roundtrip flight to {city}",
                    "purchase a roundtrip flight to {city}",
                    "get me a return trip on the plane",
                ],
            ),
        ],
    };

    let bus = DomainSpec {
        echo_weight_pct: DEFAULT_ECHO_WEIGHT,
        name: "bus".to_string(),
        slots: vec![slot(
            "city",
            &["denver", "boston", "chicago", "portland", "austin", "seattle"],
        )],
        intents: vec![
            intent(
                "search_bus_oneway",
                "search one way bus",
                &[
                    "search for a one way bus to {city}",
                    "search one way buses to {city}",
                    "i want a one way bus to {city}",
                    "search for a bus going one way to {city}",
                    "find me a one way bus to {city}",
                    "i need a one way bus ticket to {city}",
                ],
            ),
            intent(
                "search_bus_roundtrip",
                "search roundtrip bus",
                &[
                    "search for a roundtrip bus to {city}",
                    "search roundtrip buses to {city}",
                    "i want a roundtrip bus to {city}",
                    "search for a return bus to {city}",
                    "find me a roundtrip bus ticket to {city}",
                ],
            ),
            intent(
                "buy_bus_roundtrip",
                "buy roundtrip bus",
                &[
                    "get me a return trip on the bus",
                    "buy a roundtrip bus to {city}",
                    "buy me a roundtrip bus ticket to {city}",
                    "i want to buy a roundtrip bus to {city}",
                    "purchase a roundtrip bus to {city}",
                ],
            ),
        ],
    };

    let restaurant = DomainSpec {
        echo_weight_pct: DEFAULT_ECHO_WEIGHT,
        name: "restaurant".to_string(),
        slots: vec![
            slot("count", &["two", "three", "four", "six"]),
            slot("cuisine", &["italian", "mexican", "thai", "chinese", "indian"]),
        ],
        intents: vec![
            intent(
                "book_table",
                "book table at restaurant",
                &[
                    "book a table at the {cuisine} restaurant",
                    "book me a table for {count} at the restaurant",
                    "i want to book a table for {count} people",
                    "book a restaurant table for tonight",
                    "reserve a table at the {cuisine} restaurant",
                ],
            ),
            intent(
                "search_restaurant",
                "search for restaurant nearby",
                &[
                    "search for a {cuisine} restaurant nearby",
                    "search for restaurants near me",
                    "i want a {cuisine} restaurant nearby",
                    "search nearby for a good {cuisine} restaurant",
                    "find a {cuisine} restaurant close by",
                ],
            ),
            intent(
                "order_food",
                "order food from restaurant",
                &[
                    "order {cuisine} food from the restaurant",
                    "order some {cuisine} food for delivery",
                    "i want to order {cuisine} food",
                    "order dinner from the {cuisine} place",
                    "get me {cuisine} food delivered",
                ],
            ),
        ],
    };

    let iot = DomainSpec {
        // device-command summaries are rare in assistant-style text
        echo_weight_pct: 30,
        name: "iot".to_string(),
        slots: vec![
            slot("degree", &["sixty", "seventy", "eighty"]),
            slot("door_kind", &["front", "back", "side"]),
            slot("room", &["kitchen", "bedroom", "garage", "office"]),
        ],
        intents: vec![
            intent(
                "turn_on_light",
                "turn on the light",
                &[
                    "turn on the {room} light",
                    "turn on the light in the {room}",
                    "turn on the lights in the {room}",
                    "switch on the {room} light",
                ],
            ),
            intent(
                "turn_off_light",
                "turn off the light",
                &[
                    "turn off the {room} light",
                    "turn off the light in the {room}",
                    "turn off the lights in the {room}",
                    "switch off the {room} light",
                ],
            ),
            intent(
                "set_thermostat",
                "set thermostat temperature",
                &[
                    "set the thermostat to {degree} degrees",
                    "set the {room} temperature to {degree}",
                    "set the thermostat in the {room}",
                    "adjust the temperature to {degree} degrees",
                ],
            ),
            intent(
                "lock_door",
                "lock the door",
                &[
                    "lock the {door_kind} door",
                    "lock up the {door_kind} door",
                    "lock the {door_kind} door please",
                    "lock the door at the {door_kind} now",
                ],
            ),
        ],
    };

    let media = DomainSpec {
        echo_weight_pct: DEFAULT_ECHO_WEIGHT,
        name: "media".to_string(),
        slots: vec![
            slot("film_kind", &["comedy", "action", "horror", "drama"]),
            slot("genre", &["jazz", "rock", "classical", "country"]),
        ],
        intents: vec![
            intent(
                "play_music",
                "play music from library",
                &[
                    "play some {genre} music",
                    "play {genre} music from my library",
                    "i want to hear some {genre} music",
                    "put on some {genre} music",
                ],
            ),
            intent(
                "play_movie",
                "play movie on screen",
                &[
                    "play a {film_kind} movie",
                    "play the {film_kind} movie on the screen",
                    "i want to watch a {film_kind} movie",
                    "start playing a {film_kind} movie",
                ],
            ),
            intent(
                "pause_playback",
                "pause the playback",
                &[
                    "pause the playback",
                    "pause playback please",
                    "pause it for a moment",
                    "stop the playback for now",
                ],
            ),
        ],
    };

    SyntheticSpec {
        domains: vec![banking, flight, bus, restaurant, iot, media],
        mode: SchemaMode::Clean,
        utterances_per_intent: 50,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{lint_schema, LintConfig, LintWarning};

    #[test]
    fn generation_is_deterministic() {
        let spec = default_world();
        let (a, _) = generate_synthetic(&spec, 17).unwrap();
        let (b, _) = generate_synthetic(&spec, 17).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_synthetic(&spec, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn world_shape_matches_defaults() {
        let spec = default_world();
        let (data, schema) = generate_synthetic(&spec, 17).unwrap();
        assert_eq!(schema.domains().len(), 6);
        assert_eq!(schema.len(), 20);
        assert_eq!(data.len(), 20 * 50);
        for e in schema.entries() {
            assert!(data.iter().any(|u| u.intent == e.intent));
        }
    }

    #[test]
    fn clean_schema_lints_with_zero_warnings() {
        let spec = default_world();
        let (_, schema) = generate_synthetic(&spec, 17).unwrap();
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(warnings.is_empty(), "clean world produced {warnings:?}");
    }

    #[test]
    fn ablation_schema_flags_tickets_and_pins_the_phrase() {
        let mut spec = default_world();
        spec.mode = SchemaMode::Ablation;
        let (_, schema) = generate_synthetic(&spec, 17).unwrap();
        assert_eq!(
            schema.canonical_for("search_flight_oneway"),
            Some("search tickets for flight one way")
        );
        let warnings = lint_schema(&schema, &LintConfig::default());
        assert!(
            warnings.iter().any(|w| matches!(
                w,
                LintWarning::SpuriousToken { domain, token, .. }
                    if domain == "flight" && token == "tickets"
            )),
            "ablation schema must flag tickets, got {warnings:?}"
        );
        // the spurious warning is the only kind present
        assert!(warnings
            .iter()
            .all(|w| matches!(w, LintWarning::SpuriousToken { .. })));
    }

    #[test]
    fn pinned_paper_phrases_are_present() {
        let spec = default_world();
        let (data, schema) = generate_synthetic(&spec, 17).unwrap();
        assert_eq!(
            schema.canonical_for("transfer_money"),
            Some("transfer money to bank account")
        );
        assert_eq!(
            schema.canonical_for("check_balance"),
            Some("check balance in bank account")
        );
        assert!(data
            .iter()
            .any(|u| u.text == "i want to transfer money" && u.intent == "transfer_money"));
        assert!(data
            .iter()
            .any(|u| u.text == "get me a return trip on the bus" && u.intent == "buy_bus_roundtrip"));
    }

    #[test]
    fn corpus_is_unlabeled_and_mode_independent() {
        let spec = default_world();
        let mut ablation = default_world();
        ablation.mode = SchemaMode::Ablation;
        let a = generate_pretrain_corpus(&spec, 17, 16, 200).unwrap();
        let b = generate_pretrain_corpus(&ablation, 17, 16, 200).unwrap();
        assert_eq!(a, b, "corpus must not depend on schema mode");
        // echo lines exist and carry the marker; no line contains a gold
        // utterance -> canonical pair (canonical phrases never appear)
        let echo_count = a.iter().filter(|l| l.contains(" intent: ")).count();
        assert_eq!(echo_count, 200);
        // unlabeled means: no intent label strings anywhere, and every echo
        // answer is derivable from its own sentence (word subset)
        let (_, schema) = generate_synthetic(&spec, 17).unwrap();
        for line in &a {
            for e in schema.entries() {
                assert!(
                    !line.contains(&e.intent),
                    "intent label {:?} leaked into corpus line {line:?}",
                    e.intent
                );
            }
            if let Some((sentence, answer)) = line.split_once(" intent: ") {
                let sent_words: Vec<&str> = sentence.split_whitespace().collect();
                for w in answer.split_whitespace() {
                    assert!(
                        sent_words.contains(&w),
                        "echo answer word {w:?} not in its sentence: {line:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn echo_answers_are_ordered_subsets_of_content_words() {
        let spec = default_world();
        let corpus = generate_pretrain_corpus(&spec, 3, 4, 100).unwrap();
        for line in corpus.iter().filter(|l| l.contains(" intent: ")) {
            let (sentence, answer) = line.split_once(" intent: ").unwrap();
            let sent_words: Vec<&str> = sentence.split_whitespace().collect();
            let mut cursor = 0usize;
            for w in answer.split_whitespace() {
                let pos = sent_words[cursor..]
                    .iter()
                    .position(|&s| s == w)
                    .unwrap_or_else(|| panic!("answer word {w:?} breaks order in {line:?}"));
                cursor += pos + 1;
            }
        }
    }

    #[test]
    fn undefined_slot_is_an_error() {
        let spec = SyntheticSpec {
            domains: vec![DomainSpec {
                name: "d".to_string(),
                slots: vec![],
                intents: vec![intent("a", "do a thing", &["please {missing} now"])],
                echo_weight_pct: 100,
            }],
            mode: SchemaMode::Clean,
            utterances_per_intent: 2,
        };
        assert!(matches!(
            generate_synthetic(&spec, 1),
            Err(SynthError::UndefinedSlot { .. })
        ));
    }
}
