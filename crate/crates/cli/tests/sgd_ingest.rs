use canform_cli::sgd::ingest_sgd;
use std::path::Path;

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sgd"))
}

#[test]
fn fixture_yields_the_hand_counted_seven_utterances() {
    let (dataset, skeleton) = ingest_sgd(fixture_dir()).unwrap();
    // 3 bus + 3 banking + 1 media; the multi-domain dialogue and every
    // NONE-intent turn contribute nothing
    assert_eq!(dataset.len(), 7);
    assert_eq!(
        dataset.iter().filter(|u| u.domain == "Buses_1").count(),
        3
    );
    assert_eq!(
        dataset.iter().filter(|u| u.domain == "Banks_1").count(),
        3
    );
    assert_eq!(
        dataset.iter().filter(|u| u.domain == "Media_1").count(),
        1
    );
    // skeleton has one row per (intent, domain), canonical left blank
    let mut intents: Vec<&str> = skeleton.iter().map(|e| e.intent.as_str()).collect();
    intents.sort_unstable();
    assert_eq!(
        intents,
        ["BuyBusTicket", "CheckBalance", "FindBus", "PlayMovie", "TransferMoney"]
    );
    assert!(skeleton.iter().all(|e| e.canonical.is_empty()));
}

#[test]
fn multi_domain_dialogues_are_fully_excluded() {
    let (dataset, _) = ingest_sgd(fixture_dir()).unwrap();
    assert!(
        dataset
            .iter()
            .all(|u| u.domain != "Flights_2" && u.domain != "Hotels_1"),
        "multi-domain dialogue turns must not be ingested"
    );
    assert!(!dataset
        .iter()
        .any(|u| u.text.contains("flight and a hotel")));
}

#[test]
fn none_intent_turns_are_excluded() {
    let (dataset, _) = ingest_sgd(fixture_dir()).unwrap();
    assert!(!dataset.iter().any(|u| u.text.contains("goodbye")));
    assert!(!dataset.iter().any(|u| u.text.contains("that is everything")));
}
