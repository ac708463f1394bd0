//! Checkpoint container: one JSON header line describing configs, vocab,
//! schema, digests and the array layout, followed by every weight array
//! as raw little-endian f32 in header-declared order.
//!
//! Loads reject version mismatches, truncation, payload-digest drift and
//! any drift of the frozen LM weights against the recorded digest.

use crate::error::CliError;
use canform_core::digest::Hasher;
use canform_core::embed::EmbeddingTable;
use canform_core::encoder::{EncoderConfig, SoftPromptState};
use canform_core::lm::{LanguageModel, LmConfig};
use canform_core::schema::{CanonicalSchema, SchemaEntry};
use canform_core::tensor::Tensor;
use canform_core::tokenizer::Tokenizer;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone)]
pub struct Checkpoint {
    pub lm: LanguageModel<f32>,
    pub tokenizer: Tokenizer,
    /// Digest the frozen LM is pinned to (equals the live digest).
    pub lm_digest: u64,
    pub encoder: Option<SoftPromptState<f32>>,
    pub virtual_tokens: Option<Tensor<f32>>,
    pub embedding: Option<EmbeddingTable>,
    pub schema: Option<CanonicalSchema>,
}

#[derive(Serialize, Deserialize)]
struct LmConfigDto {
    layers: usize,
    model_dim: usize,
    heads: usize,
    ffn_dim: usize,
    max_seq_len: usize,
    vocab_size: usize,
}

#[derive(Serialize, Deserialize)]
struct EncoderConfigDto {
    n_virtual_tokens: usize,
    seed_dim: usize,
    hidden_dim: usize,
    model_dim: usize,
    lstm_layers: usize,
}

#[derive(Serialize, Deserialize)]
struct ArrayDto {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct EmbedDto {
    dim: usize,
    words: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDto {
    intent: String,
    canonical: String,
    domain: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    lm_config: LmConfigDto,
    lm_frozen: bool,
    lm_digest: String,
    vocab: Vec<String>,
    encoder_config: Option<EncoderConfigDto>,
    embed: Option<EmbedDto>,
    schema: Option<Vec<SchemaDto>>,
    payload_digest: String,
    arrays: Vec<ArrayDto>,
}

fn push_array(
    arrays: &mut Vec<ArrayDto>,
    payload: &mut Vec<u8>,
    name: &str,
    t: &Tensor<f32>,
) {
    arrays.push(ArrayDto {
        name: name.to_string(),
        rows: t.rows(),
        cols: t.cols(),
    });
    for &v in t.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<(), CliError> {
    let mut arrays = Vec::new();
    let mut payload = Vec::new();

    for (name, t) in ckpt.lm.param_names().iter().zip(ckpt.lm.params()) {
        push_array(&mut arrays, &mut payload, &format!("lm.{name}"), t);
    }
    if let Some(enc) = &ckpt.encoder {
        for (name, t) in enc.param_names().iter().zip(enc.params()) {
            push_array(&mut arrays, &mut payload, &format!("encoder.{name}"), t);
        }
    }
    if let Some(vt) = &ckpt.virtual_tokens {
        push_array(&mut arrays, &mut payload, "virtual_tokens", vt);
    }
    if let Some(embed) = &ckpt.embedding {
        arrays.push(ArrayDto {
            name: "embedding.vectors".to_string(),
            rows: embed.len(),
            cols: embed.dim(),
        });
        for &v in embed.raw_vectors() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut hasher = Hasher::new();
    hasher.write_bytes(&payload);
    let payload_digest = hasher.finish();

    let header = Header {
        format_version: FORMAT_VERSION,
        lm_config: {
            let c = ckpt.lm.config();
            LmConfigDto {
                layers: c.layers,
                model_dim: c.model_dim,
                heads: c.heads,
                ffn_dim: c.ffn_dim,
                max_seq_len: c.max_seq_len,
                vocab_size: c.vocab_size,
            }
        },
        lm_frozen: ckpt.lm.is_frozen(),
        lm_digest: format!("{:016x}", ckpt.lm_digest),
        vocab: ckpt.tokenizer.words().to_vec(),
        encoder_config: ckpt.encoder.as_ref().map(|e| {
            let c = e.config();
            EncoderConfigDto {
                n_virtual_tokens: c.n_virtual_tokens,
                seed_dim: c.seed_dim,
                hidden_dim: c.hidden_dim,
                model_dim: c.model_dim,
                lstm_layers: c.lstm_layers,
            }
        }),
        embed: ckpt.embedding.as_ref().map(|e| EmbedDto {
            dim: e.dim(),
            words: e.words().to_vec(),
        }),
        schema: ckpt.schema.as_ref().map(|s| {
            s.entries()
                .iter()
                .map(|e| SchemaDto {
                    intent: e.intent.clone(),
                    canonical: e.canonical.clone(),
                    domain: e.domain.clone(),
                })
                .collect()
        }),
        payload_digest: payload_digest.to_hex(),
        arrays,
    };

    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string(&header).expect("serializable").as_bytes())?;
    f.write_all(b"\n")?;
    f.write_all(&payload)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::Invariant(format!("corrupt checkpoint: {}", msg.into()))
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    let mut raw = Vec::new();
    fs::File::open(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut raw)?;
    let split = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header: Header =
        serde_json::from_slice(&raw[..split]).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CliError::Validation(format!(
            "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let payload = &raw[split + 1..];
    let declared: usize = header.arrays.iter().map(|a| a.rows * a.cols * 4).sum();
    if payload.len() != declared {
        return Err(corrupt(format!(
            "payload is {} bytes, header declares {declared}",
            payload.len()
        )));
    }
    let mut hasher = Hasher::new();
    hasher.write_bytes(payload);
    if hasher.finish().to_hex() != header.payload_digest {
        return Err(corrupt("payload digest mismatch"));
    }

    let mut offset = 0usize;
    let mut tensors: Vec<(String, Tensor<f32>)> = Vec::with_capacity(header.arrays.len());
    for a in &header.arrays {
        let n = a.rows * a.cols;
        let mut data = Vec::with_capacity(n);
        for chunk in payload[offset..offset + n * 4].chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        offset += n * 4;
        tensors.push((a.name.clone(), Tensor::from_vec(a.rows, a.cols, data)));
    }

    let lm_config = LmConfig {
        layers: header.lm_config.layers,
        model_dim: header.lm_config.model_dim,
        heads: header.lm_config.heads,
        ffn_dim: header.lm_config.ffn_dim,
        max_seq_len: header.lm_config.max_seq_len,
        vocab_size: header.lm_config.vocab_size,
    };
    let lm_weights: Vec<Tensor<f32>> = tensors
        .iter()
        .filter(|(n, _)| n.starts_with("lm."))
        .map(|(_, t)| t.clone())
        .collect();
    let lm = LanguageModel::from_weights(lm_config, lm_weights, header.lm_frozen)
        .map_err(|e| corrupt(e.to_string()))?;

    let lm_digest = u64::from_str_radix(&header.lm_digest, 16)
        .map_err(|_| corrupt("bad lm digest encoding"))?;
    if lm.weight_digest().0 != lm_digest {
        return Err(corrupt("language model weights do not match recorded digest"));
    }

    let tokenizer = Tokenizer::from_words(header.vocab.clone());

    let encoder = match &header.encoder_config {
        Some(c) => {
            let cfg = EncoderConfig {
                n_virtual_tokens: c.n_virtual_tokens,
                seed_dim: c.seed_dim,
                hidden_dim: c.hidden_dim,
                model_dim: c.model_dim,
                lstm_layers: c.lstm_layers,
            };
            let weights: Vec<Tensor<f32>> = tensors
                .iter()
                .filter(|(n, _)| n.starts_with("encoder."))
                .map(|(_, t)| t.clone())
                .collect();
            Some(
                SoftPromptState::from_weights(cfg, weights)
                    .ok_or_else(|| corrupt("encoder weights do not fit config"))?,
            )
        }
        None => None,
    };

    let virtual_tokens = tensors
        .iter()
        .find(|(n, _)| n == "virtual_tokens")
        .map(|(_, t)| t.clone());

    let embedding = match &header.embed {
        Some(e) => {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| n == "embedding.vectors")
                .ok_or_else(|| corrupt("embedding declared but array missing"))?;
            Some(
                EmbeddingTable::from_rows(e.dim, e.words.clone(), t.data().to_vec())
                    .map_err(|er| corrupt(er.to_string()))?,
            )
        }
        None => None,
    };

    let schema = match &header.schema {
        Some(entries) => Some(
            CanonicalSchema::new(
                entries
                    .iter()
                    .map(|e| SchemaEntry {
                        intent: e.intent.clone(),
                        canonical: e.canonical.clone(),
                        domain: e.domain.clone(),
                    })
                    .collect(),
            )
            .map_err(|e| corrupt(e.to_string()))?,
        ),
        None => None,
    };

    Ok(Checkpoint {
        lm,
        tokenizer,
        lm_digest,
        encoder,
        virtual_tokens,
        embedding,
        schema,
    })
}
