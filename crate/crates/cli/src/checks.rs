//! The composite gradient check: full p-tuning loss (LSTM prompt encoder
//! through the frozen LM into the masked cross-entropy) against central
//! finite differences, on a tiny 64-bit configuration.

use crate::error::CliError;
use canform_core::clock::NullClock;
use canform_core::data::LabeledUtterance;
use canform_core::encoder::{EncoderConfig, SoftPromptState};
use canform_core::gradcheck::grad_check;
use canform_core::graph::Graph;
use canform_core::lm::{pretrain, LmConfig, PretrainParams};
use canform_core::rng::Rng;
use canform_core::schema::{CanonicalSchema, SchemaEntry};
use canform_core::tensor::Tensor;
use canform_core::tuner::{answer_targets, assemble};

/// Central-difference step for the composite check. Larger than the
/// per-op default because the loss runs through a pretrained network:
/// near-saturated coordinates have tiny gradients and the difference
/// quotient's rounding noise scales as 1/eps.
pub const COMPOSITE_EPS: f64 = 5e-4;

pub fn composite_grad_check(seed: u64) -> Result<f64, CliError> {
    let corpus: Vec<String> = [
        "send money to the bank",
        "pay the water bill now",
        "check the account balance",
        "book a table for two",
        "money goes to the account intent: money account",
        "book a table now intent: book table",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let params = PretrainParams {
        epochs: 2,
        batch_size: 4,
        learning_rate: 3e-3,
        holdout_ratio: 0.2,
    };
    let arch = |v: usize| LmConfig {
        layers: 1,
        model_dim: 12,
        heads: 2,
        ffn_dim: 16,
        max_seq_len: 32,
        vocab_size: v,
    };
    let trained = pretrain::<f64>(&corpus, arch, params, seed, &NullClock)?;
    let mut model = trained.model;
    model.freeze();
    let tokenizer = trained.tokenizer;

    let schema = CanonicalSchema::new(vec![SchemaEntry {
        intent: "transfer_money".into(),
        canonical: "money to account".into(),
        domain: "banking".into(),
    }])
    .map_err(|e| CliError::validation(e.to_string()))?;
    let example = LabeledUtterance {
        text: "send money to the bank".into(),
        intent: "transfer_money".into(),
        domain: "banking".into(),
    };
    let assembled = assemble(&example, &schema, &tokenizer, 2, 32)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let template = SoftPromptState::<f64>::init(
        EncoderConfig {
            n_virtual_tokens: 2,
            seed_dim: 3,
            hidden_dim: 4,
            model_dim: 12,
            lstm_layers: 2,
        },
        &mut Rng::new(seed),
    );
    let mut params: Vec<Tensor<f64>> = template.params().into_iter().cloned().collect();
    grad_check(
        |ps: &[Tensor<f64>]| {
            let mut enc = template.clone();
            for (dst, src) in enc.params_mut().into_iter().zip(ps) {
                *dst = src.clone();
            }
            let mut g = Graph::new();
            let (prefix, ids) = enc.encode_on(&mut g, true);
            let wired = model.wire(&mut g, false);
            let layout = model
                .batched_logits(&mut g, &wired, Some(prefix), &[assembled.token_ids.clone()])
                .expect("tiny config fits");
            let (targets, mask) = answer_targets(&layout, &[&assembled]);
            let loss = g.masked_cross_entropy(layout.logits, &targets, &mask);
            g.backward(loss).expect("scalar loss");
            let grads = ids
                .iter()
                .map(|&id| g.grad(id).cloned().expect("encoder grad"))
                .collect();
            (g.value(loss).item(), grads)
        },
        &mut params,
        COMPOSITE_EPS,
    )
    .map_err(|e| CliError::validation(e.to_string()))
}
