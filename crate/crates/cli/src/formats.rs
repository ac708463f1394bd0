//! On-disk formats: JSONL datasets, schema JSON, synthetic world specs,
//! embedding table files (JSON header + little-endian f32 rows) and
//! training-log CSV.

use crate::error::CliError;
use canform_core::data::{Dataset, LabeledUtterance};
use canform_core::embed::EmbeddingTable;
use canform_core::schema::{CanonicalSchema, SchemaEntry};
use canform_core::synth::{DomainSpec, IntentSpec, SchemaMode, SlotDef, SyntheticSpec};
use canform_core::tuner::TrainingLog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceDto {
    text: String,
    intent: String,
    domain: String,
}

/// One JSON object per line: {"text", "intent", "domain"}.
pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dto: UtteranceDto = serde_json::from_str(line).map_err(|e| {
            CliError::validation(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        if dto.text.is_empty() || dto.intent.is_empty() || dto.domain.is_empty() {
            return Err(CliError::validation(format!(
                "{}:{}: empty field",
                path.display(),
                i + 1
            )));
        }
        out.push(LabeledUtterance {
            text: dto.text,
            intent: dto.intent,
            domain: dto.domain,
        });
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, dataset: &[LabeledUtterance]) -> Result<(), CliError> {
    let mut buf = String::new();
    for u in dataset {
        let dto = UtteranceDto {
            text: u.text.clone(),
            intent: u.intent.clone(),
            domain: u.domain.clone(),
        };
        buf.push_str(&serde_json::to_string(&dto).expect("serializable"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(CliError::from)
}

#[derive(Serialize, Deserialize)]
pub struct SchemaEntryDto {
    pub intent: String,
    pub canonical: String,
    pub domain: String,
}

/// JSON array of {intent, canonical, domain}.
pub fn load_schema(path: &Path) -> Result<CanonicalSchema, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let dtos: Vec<SchemaEntryDto> =
        serde_json::from_str(&raw).map_err(|e| CliError::validation(e.to_string()))?;
    let entries = dtos
        .into_iter()
        .map(|d| SchemaEntry {
            intent: d.intent,
            canonical: d.canonical,
            domain: d.domain,
        })
        .collect();
    CanonicalSchema::new(entries).map_err(|e| CliError::validation(e.to_string()))
}

pub fn save_schema(path: &Path, schema: &CanonicalSchema) -> Result<(), CliError> {
    save_schema_entries(path, schema.entries())
}

/// Also used for skeletons whose canonical forms are still blank.
pub fn save_schema_entries(path: &Path, entries: &[SchemaEntry]) -> Result<(), CliError> {
    let dtos: Vec<SchemaEntryDto> = entries
        .iter()
        .map(|e| SchemaEntryDto {
            intent: e.intent.clone(),
            canonical: e.canonical.clone(),
            domain: e.domain.clone(),
        })
        .collect();
    fs::write(path, serde_json::to_string_pretty(&dtos).expect("serializable"))
        .map_err(CliError::from)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentDto {
    label: String,
    canonical: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    canonical_ablation: Option<String>,
    templates: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDto {
    name: String,
    intents: Vec<IntentDto>,
    #[serde(default)]
    slots: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_echo_weight")]
    echo_weight_pct: u32,
}

fn default_echo_weight() -> u32 {
    100
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDto {
    domains: Vec<DomainDto>,
    mode: String,
    #[serde(default = "default_upi")]
    utterances_per_intent: usize,
}

fn default_upi() -> usize {
    50
}

pub fn load_world(path: &Path) -> Result<SyntheticSpec, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let dto: WorldDto =
        serde_json::from_str(&raw).map_err(|e| CliError::validation(e.to_string()))?;
    let mode = match dto.mode.as_str() {
        "clean" => SchemaMode::Clean,
        "ablation" => SchemaMode::Ablation,
        other => {
            return Err(CliError::validation(format!(
                "mode must be \"clean\" or \"ablation\", got {other:?}"
            )))
        }
    };
    Ok(SyntheticSpec {
        domains: dto
            .domains
            .into_iter()
            .map(|d| DomainSpec {
                name: d.name,
                echo_weight_pct: d.echo_weight_pct,
                intents: d
                    .intents
                    .into_iter()
                    .map(|i| IntentSpec {
                        label: i.label,
                        canonical: i.canonical,
                        canonical_ablation: i.canonical_ablation,
                        templates: i.templates,
                    })
                    .collect(),
                slots: d
                    .slots
                    .into_iter()
                    .map(|(name, values)| SlotDef { name, values })
                    .collect(),
            })
            .collect(),
        mode,
        utterances_per_intent: dto.utterances_per_intent,
    })
}

pub fn save_world(path: &Path, spec: &SyntheticSpec) -> Result<(), CliError> {
    let dto = WorldDto {
        domains: spec
            .domains
            .iter()
            .map(|d| DomainDto {
                name: d.name.clone(),
                echo_weight_pct: d.echo_weight_pct,
                intents: d
                    .intents
                    .iter()
                    .map(|i| IntentDto {
                        label: i.label.clone(),
                        canonical: i.canonical.clone(),
                        canonical_ablation: i.canonical_ablation.clone(),
                        templates: i.templates.clone(),
                    })
                    .collect(),
                slots: d
                    .slots
                    .iter()
                    .map(|s| (s.name.clone(), s.values.clone()))
                    .collect(),
            })
            .collect(),
        mode: match spec.mode {
            SchemaMode::Clean => "clean".to_string(),
            SchemaMode::Ablation => "ablation".to_string(),
        },
        utterances_per_intent: spec.utterances_per_intent,
    };
    fs::write(path, serde_json::to_string_pretty(&dto).expect("serializable"))
        .map_err(CliError::from)
}

pub fn load_corpus(path: &Path) -> Result<Vec<String>, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(raw
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

pub fn save_corpus(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut buf = lines.join("\n");
    buf.push('\n');
    fs::write(path, buf).map_err(CliError::from)
}

#[derive(Serialize, Deserialize)]
struct EmbedHeader {
    dim: usize,
    count: usize,
    words: Vec<String>,
}

/// JSON header line {dim, count, words}, then `count * dim` f32 values in
/// little-endian order, one row per word.
pub fn save_embedding(path: &Path, table: &EmbeddingTable) -> Result<(), CliError> {
    let header = EmbedHeader {
        dim: table.dim(),
        count: table.len(),
        words: table.words().to_vec(),
    };
    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string(&header).expect("serializable").as_bytes())?;
    f.write_all(b"\n")?;
    let mut payload = Vec::with_capacity(table.raw_vectors().len() * 4);
    for &v in table.raw_vectors() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&payload)?;
    Ok(())
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingTable, CliError> {
    let mut raw = Vec::new();
    fs::File::open(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut raw)?;
    let split = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::validation("embedding file has no header line"))?;
    let header: EmbedHeader = serde_json::from_slice(&raw[..split])
        .map_err(|e| CliError::validation(format!("embedding header: {e}")))?;
    let payload = &raw[split + 1..];
    let expect = header.count * header.dim * 4;
    if payload.len() != expect {
        return Err(CliError::validation(format!(
            "embedding payload is {} bytes, expected {expect}",
            payload.len()
        )));
    }
    let mut vectors = Vec::with_capacity(header.count * header.dim);
    for chunk in payload.chunks_exact(4) {
        vectors.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    EmbeddingTable::from_rows(header.dim, header.words, vectors)
        .map_err(|e| CliError::validation(e.to_string()))
}

/// epoch,train_loss,val_loss,wall_ms with an empty val field when absent.
pub fn save_training_log_csv(path: &Path, log: &TrainingLog) -> Result<(), CliError> {
    let mut buf = String::from("epoch,train_loss,val_loss,wall_ms\n");
    for e in &log.epochs {
        let val = e
            .val_loss
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        buf.push_str(&format!(
            "{},{:.6},{},{}\n",
            e.epoch, e.train_loss, val, e.wall_ms
        ));
    }
    fs::write(path, buf).map_err(CliError::from)
}
