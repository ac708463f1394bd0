//! Resolver vs an exhaustive brute-force oracle, self-retrieval, scale
//! invariance and tie-break order.

use canform_core::embed::{train_skipgram, EmbeddingTable, SkipGramParams};
use canform_core::resolver::{build_index, resolve};
use canform_core::rng::Rng;
use canform_core::schema::{CanonicalSchema, SchemaEntry};
use proptest::prelude::*;

fn entry(intent: &str, canonical: &str, domain: &str) -> SchemaEntry {
    SchemaEntry {
        intent: intent.into(),
        canonical: canonical.into(),
        domain: domain.into(),
    }
}

fn schemas() -> Vec<CanonicalSchema> {
    vec![
        CanonicalSchema::new(vec![
            entry("transfer_money", "transfer money to bank account", "banking"),
            entry("check_balance", "check balance in bank account", "banking"),
            entry("pay_bill", "pay bill from bank account", "banking"),
        ])
        .unwrap(),
        CanonicalSchema::new(vec![
            entry("search_flight", "search for flight one way", "flight"),
            entry("buy_flight", "buy flight roundtrip", "flight"),
            entry("search_bus", "search for bus one way", "bus"),
            entry("buy_bus", "buy bus roundtrip", "bus"),
            entry("book_table", "book table at restaurant", "restaurant"),
        ])
        .unwrap(),
        CanonicalSchema::new(vec![
            entry("on", "turn on the light", "iot"),
            entry("off", "turn off the light", "iot"),
            entry("music", "play music from library", "media"),
        ])
        .unwrap(),
    ]
}

fn trained_table() -> EmbeddingTable {
    let mut corpus = Vec::new();
    for _ in 0..30 {
        for s in [
            "transfer money to my bank account",
            "check the balance in the bank account",
            "pay the bill from the account",
            "search for a one way flight",
            "buy a roundtrip flight ticket",
            "search for a one way bus",
            "buy a roundtrip bus ticket",
            "book a table at the restaurant",
            "turn on the light in the kitchen",
            "turn off the light in the garage",
            "play some music from my library",
        ] {
            corpus.push(s.to_string());
        }
    }
    train_skipgram(&corpus, SkipGramParams::default(), 5).unwrap()
}

/// Independent implementation: raw mean, explicit cosine, linear argmax.
fn oracle_best(query: &str, schema: &CanonicalSchema, table: &EmbeddingTable) -> Option<usize> {
    let dim = table.dim();
    let mean = |text: &str| -> Vec<f32> {
        let mut acc = vec![0.0f32; dim];
        let mut n = 0;
        for w in text.split_whitespace() {
            if let Some(v) = table.vector(&w.to_lowercase()) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                n += 1;
            }
        }
        if n > 0 {
            for a in acc.iter_mut() {
                *a /= n as f32;
            }
        }
        acc
    };
    let cosine = |u: &[f32], v: &[f32]| -> f32 {
        let dot: f32 = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
        let nu: f32 = u.iter().map(|&a| a * a).sum::<f32>().sqrt();
        let nv: f32 = v.iter().map(|&a| a * a).sum::<f32>().sqrt();
        if nu == 0.0 || nv == 0.0 {
            0.0
        } else {
            dot / (nu * nv)
        }
    };
    let q = mean(query);
    if q.iter().all(|&x| x == 0.0) {
        return None; // degenerate: resolver pins to entry 0
    }
    let mut best = 0usize;
    let mut best_s = f32::NEG_INFINITY;
    for (i, e) in schema.entries().iter().enumerate() {
        let s = cosine(&q, &mean(&e.canonical));
        if s > best_s {
            best_s = s;
            best = i;
        }
    }
    Some(best)
}

#[test]
fn resolve_matches_exhaustive_oracle_on_1000_random_queries_per_schema() {
    let table = trained_table();
    let words: Vec<&str> = table.words().iter().map(|s| s.as_str()).collect();
    for (si, schema) in schemas().iter().enumerate() {
        let index = build_index(schema, &table).unwrap();
        let mut rng = Rng::new(4000 + si as u64);
        for qi in 0..1000 {
            let len = 1 + rng.below(6);
            let mut q = String::new();
            for j in 0..len {
                if j > 0 {
                    q.push(' ');
                }
                if rng.next_f64() < 0.1 {
                    q.push_str("zzznovel"); // unknown word, skipped by the mean
                } else {
                    q.push_str(rng.choose(&words));
                }
            }
            let r = resolve(&q, schema, &index, &table).unwrap();
            match oracle_best(&q, schema, &table) {
                Some(best) => {
                    assert_eq!(
                        r.predicted_intent,
                        schema.entries()[best].intent,
                        "schema {si} query {qi} {q:?}: resolver disagrees with oracle \
                         (sim {} vs oracle idx {best})",
                        r.similarity
                    );
                }
                None => {
                    assert!(r.degenerate, "schema {si} query {qi}: oracle says degenerate");
                    assert_eq!(r.predicted_intent, schema.entries()[0].intent);
                }
            }
        }
    }
}

#[test]
fn every_schema_entry_self_retrieves_with_similarity_one() {
    let table = trained_table();
    for schema in schemas() {
        let index = build_index(&schema, &table).unwrap();
        for e in schema.entries() {
            let r = resolve(&e.canonical, &schema, &index, &table).unwrap();
            assert_eq!(r.predicted_intent, e.intent, "self-retrieval of {:?}", e.canonical);
            assert!(
                (r.similarity - 1.0).abs() <= 1e-6,
                "self-similarity {} for {:?}",
                r.similarity,
                e.canonical
            );
        }
    }
}

#[test]
fn permuting_schema_order_changes_nothing_off_ties() {
    let table = trained_table();
    let schema = &schemas()[1];
    let mut reversed_entries: Vec<SchemaEntry> = schema.entries().to_vec();
    reversed_entries.reverse();
    let reversed = CanonicalSchema::new(reversed_entries).unwrap();
    let index_a = build_index(schema, &table).unwrap();
    let index_b = build_index(&reversed, &table).unwrap();
    let mut rng = Rng::new(99);
    let words: Vec<&str> = table.words().iter().map(|s| s.as_str()).collect();
    for _ in 0..300 {
        let len = 1 + rng.below(5);
        let q: Vec<&str> = (0..len).map(|_| *rng.choose(&words)).collect();
        let q = q.join(" ");
        let a = resolve(&q, schema, &index_a, &table).unwrap();
        let b = resolve(&q, &reversed, &index_b, &table).unwrap();
        if a.margin > 1e-6 {
            assert_eq!(
                a.predicted_intent, b.predicted_intent,
                "non-tie prediction changed under permutation for {q:?}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_positive_scaling_preserves_the_argmax(
        factor in 0.001f32..1000.0,
        seed in 0u64..500,
    ) {
        let table = trained_table();
        let schema = &schemas()[0];
        let index = build_index(schema, &table).unwrap();
        let scaled = table.scaled(factor);
        let scaled_index = build_index(schema, &scaled).unwrap();
        let words: Vec<&str> = table.words().iter().map(|s| s.as_str()).collect();
        let mut rng = Rng::new(seed);
        let len = 1 + rng.below(5);
        let q: Vec<&str> = (0..len).map(|_| *rng.choose(&words)).collect();
        let q = q.join(" ");
        let a = resolve(&q, schema, &index, &table).unwrap();
        let b = resolve(&q, schema, &scaled_index, &scaled).unwrap();
        prop_assert_eq!(a.predicted_intent, b.predicted_intent);
    }
}
