//! Ingestion adapter for schema-guided-dialogue style corpora: extracts
//! labeled user utterances from single-domain dialogues and emits a
//! schema skeleton whose canonical forms are left blank for the designer.

use crate::error::CliError;
use canform_core::data::{Dataset, LabeledUtterance};
use canform_core::schema::SchemaEntry;
use serde::Deserialize;
use std::fs;
use std::path::Path;

#[derive(Deserialize)]
struct Dialogue {
    #[allow(dead_code)]
    #[serde(default)]
    dialogue_id: String,
    services: Vec<String>,
    turns: Vec<Turn>,
}

#[derive(Deserialize)]
struct Turn {
    speaker: String,
    utterance: String,
    #[serde(default)]
    frames: Vec<Frame>,
}

#[derive(Deserialize)]
struct Frame {
    #[serde(default)]
    service: Option<String>,
    #[serde(default)]
    state: Option<FrameState>,
}

#[derive(Deserialize)]
struct FrameState {
    #[serde(default)]
    active_intent: Option<String>,
}

/// Reads every `*.json` dialogue file in `dir` (sorted by name). Only
/// single-domain dialogues contribute; user turns without an active
/// intent are skipped.
pub fn ingest_sgd(dir: &Path) -> Result<(Dataset, Vec<SchemaEntry>), CliError> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::validation(format!(
            "no .json dialogue files in {}",
            dir.display()
        )));
    }

    let mut dataset: Dataset = Vec::new();
    let mut skeleton: Vec<SchemaEntry> = Vec::new();
    for file in files {
        let raw = fs::read_to_string(&file)
            .map_err(|e| CliError::io(format!("{}: {e}", file.display())))?;
        let dialogues: Vec<Dialogue> = serde_json::from_str(&raw)
            .map_err(|e| CliError::validation(format!("{}: {e}", file.display())))?;
        for d in dialogues {
            if d.services.len() != 1 {
                continue; // multi-domain dialogues are out of scope
            }
            let domain = d.services[0].clone();
            for turn in d.turns {
                if turn.speaker != "USER" {
                    continue;
                }
                let intent = turn.frames.iter().find_map(|f| {
                    if let Some(s) = &f.service {
                        if *s != domain {
                            return None;
                        }
                    }
                    f.state
                        .as_ref()
                        .and_then(|s| s.active_intent.clone())
                        .filter(|i| !i.is_empty() && i != "NONE")
                });
                let Some(intent) = intent else { continue };
                if turn.utterance.trim().is_empty() {
                    return Err(CliError::validation(format!(
                        "{}: user turn with intent {intent:?} has no utterance",
                        file.display()
                    )));
                }
                if !skeleton
                    .iter()
                    .any(|e| e.intent == intent && e.domain == domain)
                {
                    skeleton.push(SchemaEntry {
                        intent: intent.clone(),
                        canonical: String::new(),
                        domain: domain.clone(),
                    });
                }
                dataset.push(LabeledUtterance {
                    text: turn.utterance.clone(),
                    intent,
                    domain: domain.clone(),
                });
            }
        }
    }
    Ok((dataset, skeleton))
}
