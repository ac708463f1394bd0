//! P-tuning engine. Training sequences follow the template
//! `<virtual tokens> utterance intent: canonical <eos>` and the loss is
//! the mean cross-entropy over exactly the canonical+EOS positions. The
//! language model must be frozen before tuning; its weight digest is
//! re-checked every epoch and any drift is a fatal invariant breach.

use crate::clock::Clock;
use crate::data::LabeledUtterance;
use crate::encoder::SoftPromptState;
use crate::graph::Graph;
use crate::lm::{BatchLayout, LanguageModel, LmError};
use crate::optim::Optimizer;
use crate::real::Real;
use crate::rng::Rng;
use crate::schema::CanonicalSchema;
use crate::tensor::Tensor;
use crate::tokenizer::{TokenizeError, Tokenizer, EOS, INTENT_MARKER};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct AssembledExample {
    /// utterance ++ "intent:" ++ canonical ++ EOS
    pub token_ids: Vec<u32>,
    /// true exactly on canonical tokens and the EOS terminator
    pub loss_mask: Vec<bool>,
    pub n_virtual: usize,
}

impl AssembledExample {
    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&b| b).count()
    }

    pub fn total_len(&self) -> usize {
        self.n_virtual + self.token_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssembleError {
    UnknownIntent { intent: String },
    LengthOverflow { utterance: String, needed: usize, max: usize },
    EmptyUtterance,
}

impl fmt::Display for AssembleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssembleError::UnknownIntent { intent } => {
                write!(f, "intent {intent:?} is not in the schema")
            }
            AssembleError::LengthOverflow { utterance, needed, max } => write!(
                f,
                "assembled sequence for {utterance:?} needs {needed} positions, max is {max}"
            ),
            AssembleError::EmptyUtterance => write!(f, "utterance is empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TuneError {
    ModelNotFrozen,
    DigestChanged { epoch: usize },
    NonFiniteLoss { epoch: usize },
    EmptyTrainSet,
    EmptyFewShotSet,
    Assemble(AssembleError),
    Lm(LmError),
    Tokenize(TokenizeError),
}

impl fmt::Display for TuneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuneError::ModelNotFrozen => write!(f, "language model must be frozen before p-tuning"),
            TuneError::DigestChanged { epoch } => {
                write!(f, "frozen LM digest changed during epoch {epoch} (invariant breach)")
            }
            TuneError::NonFiniteLoss { epoch } => {
                write!(f, "non-finite tuning loss at epoch {epoch}")
            }
            TuneError::EmptyTrainSet => write!(f, "training set is empty"),
            TuneError::EmptyFewShotSet => write!(f, "few-shot set is empty; k must be at least 1"),
            TuneError::Assemble(e) => write!(f, "{e}"),
            TuneError::Lm(e) => write!(f, "{e}"),
            TuneError::Tokenize(e) => write!(f, "{e}"),
        }
    }
}

impl From<AssembleError> for TuneError {
    fn from(e: AssembleError) -> Self {
        TuneError::Assemble(e)
    }
}

impl From<LmError> for TuneError {
    fn from(e: LmError) -> Self {
        TuneError::Lm(e)
    }
}

impl From<TokenizeError> for TuneError {
    fn from(e: TokenizeError) -> Self {
        TuneError::Tokenize(e)
    }
}

/// Builds the training sequence and answer-only loss mask for one example.
pub fn assemble(
    example: &LabeledUtterance,
    schema: &CanonicalSchema,
    tokenizer: &Tokenizer,
    n_virtual: usize,
    max_seq_len: usize,
) -> Result<AssembledExample, AssembleError> {
    let canonical = schema
        .canonical_for(&example.intent)
        .ok_or_else(|| AssembleError::UnknownIntent {
            intent: example.intent.clone(),
        })?;
    let utt = tokenizer
        .tokenize(&example.text)
        .map_err(|_| AssembleError::EmptyUtterance)?;
    let can = tokenizer
        .tokenize(canonical)
        .map_err(|_| AssembleError::EmptyUtterance)?;

    let mut token_ids = Vec::with_capacity(utt.len() + can.len() + 2);
    let mut loss_mask = Vec::with_capacity(utt.len() + can.len() + 2);
    token_ids.extend_from_slice(&utt);
    loss_mask.resize(utt.len(), false);
    token_ids.push(INTENT_MARKER);
    loss_mask.push(false);
    token_ids.extend_from_slice(&can);
    loss_mask.resize(loss_mask.len() + can.len(), true);
    token_ids.push(EOS);
    loss_mask.push(true);

    let needed = n_virtual + token_ids.len();
    if needed > max_seq_len {
        return Err(AssembleError::LengthOverflow {
            utterance: example.text.clone(),
            needed,
            max: max_seq_len,
        });
    }
    Ok(AssembledExample {
        token_ids,
        loss_mask,
        n_virtual,
    })
}

/// Cross-entropy targets over a batched layout: the row holding element
/// e predicts element e+1, so token j is scored at row n_prefix + j - 1
/// of its block whenever the mask marks token j.
pub fn answer_targets(layout: &BatchLayout, examples: &[&AssembledExample]) -> (Vec<u32>, Vec<bool>) {
    let rows = examples.len() * layout.block_len;
    let mut targets = alloc::vec![0u32; rows];
    let mut mask = alloc::vec![false; rows];
    for (b, ex) in examples.iter().enumerate() {
        for (j, (&tok, &m)) in ex.token_ids.iter().zip(&ex.loss_mask).enumerate() {
            if !m {
                continue;
            }
            debug_assert!(layout.n_prefix + j >= 1, "mask on the very first element");
            let row = layout.row(b, layout.n_prefix + j - 1);
            targets[row] = tok;
            mask[row] = true;
        }
    }
    (targets, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Base,
    FewShot,
}

#[derive(Clone, Debug)]
pub struct TuneConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate decays linearly to `learning_rate * final_lr_fraction`
    /// over the configured epochs; 1.0 keeps it constant.
    pub final_lr_fraction: f64,
    /// Adam second-moment decay; short tuning runs adapt faster below the
    /// textbook 0.999.
    pub adam_beta2: f64,
    pub seed: u64,
    /// Early-stop patience on validation loss; `None` runs all epochs.
    pub patience: Option<usize>,
}

impl TuneConfig {
    pub fn base(seed: u64) -> Self {
        TuneConfig {
            stage: Stage::Base,
            epochs: 30,
            batch_size: 8,
            learning_rate: 8e-3,
            final_lr_fraction: 1.0,
            adam_beta2: 0.999,
            seed,
            patience: Some(5),
        }
    }

    pub fn few_shot(seed: u64) -> Self {
        TuneConfig {
            stage: Stage::FewShot,
            epochs: 20,
            batch_size: 4,
            learning_rate: 4e-3,
            final_lr_fraction: 1.0,
            adam_beta2: 0.999,
            seed,
            patience: None,
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * (1.0 - t * (1.0 - self.final_lr_fraction))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub lm_digest: u64,
}

fn assemble_all<R: Real>(
    model: &LanguageModel<R>,
    encoder: &SoftPromptState<R>,
    set: &[LabeledUtterance],
    schema: &CanonicalSchema,
    tokenizer: &Tokenizer,
) -> Result<Vec<AssembledExample>, AssembleError> {
    set.iter()
        .map(|ex| {
            assemble(
                ex,
                schema,
                tokenizer,
                encoder.config().n_virtual_tokens,
                model.config().max_seq_len,
            )
        })
        .collect()
}

/// Masked loss of a (frozen model, current encoder) pair, forward only.
pub fn masked_loss<R: Real>(
    model: &LanguageModel<R>,
    encoder: &SoftPromptState<R>,
    examples: &[AssembledExample],
) -> Result<f64, TuneError> {
    let prefix = encoder.export_virtual_tokens();
    masked_loss_with_prefix(model, &prefix, examples)
}

/// Same as [`masked_loss`] but with an already-exported prefix matrix.
pub fn masked_loss_with_prefix<R: Real>(
    model: &LanguageModel<R>,
    prefix: &Tensor<R>,
    examples: &[AssembledExample],
) -> Result<f64, TuneError> {
    if examples.is_empty() {
        return Err(TuneError::EmptyTrainSet);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in examples.chunks(16) {
        let mut g = Graph::new();
        let wired = model.wire(&mut g, false);
        let pid = g.constant(prefix.clone());
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|e| e.token_ids.clone()).collect();
        let layout = model.batched_logits(&mut g, &wired, Some(pid), &seqs)?;
        let refs: Vec<&AssembledExample> = chunk.iter().collect();
        let (targets, mask) = answer_targets(&layout, &refs);
        let n = mask.iter().filter(|&&b| b).count();
        let loss = g.masked_cross_entropy(layout.logits, &targets, &mask);
        total += g.value(loss).item().to_f64() * n as f64;
        count += n;
    }
    Ok(total / count.max(1) as f64)
}

fn run_stage<R: Real>(
    model: &LanguageModel<R>,
    encoder: &mut SoftPromptState<R>,
    train: &[LabeledUtterance],
    val: &[LabeledUtterance],
    schema: &CanonicalSchema,
    tokenizer: &Tokenizer,
    config: &TuneConfig,
    clock: &dyn Clock,
) -> Result<TrainingLog, TuneError> {
    if !model.is_frozen() {
        return Err(TuneError::ModelNotFrozen);
    }
    if train.is_empty() {
        return Err(TuneError::EmptyTrainSet);
    }
    let digest0 = model.weight_digest();
    let assembled = assemble_all(model, encoder, train, schema, tokenizer)?;
    let assembled_val = if val.is_empty() {
        Vec::new()
    } else {
        assemble_all(model, encoder, val, schema, tokenizer)?
    };

    let mut opt = Optimizer::<R>::new(
        crate::optim::Algorithm::Adam {
            beta1: 0.9,
            beta2: config.adam_beta2,
            eps: 1e-8,
        },
        config.learning_rate,
    );
    let mut shuffle_rng = Rng::new(config.seed).substream("ptune/shuffle");
    let mut order: Vec<usize> = (0..assembled.len()).collect();

    let mut log = TrainingLog {
        lm_digest: digest0.0,
        ..TrainingLog::default()
    };
    let mut best: Option<(f64, usize, Vec<Tensor<R>>)> = None;
    let mut strikes = 0usize;
    let t0 = clock.now_ms();

    for epoch in 0..config.epochs {
        opt.learning_rate = config.lr_at(epoch);
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&AssembledExample> = chunk.iter().map(|&i| &assembled[i]).collect();
            let seqs: Vec<Vec<u32>> = batch.iter().map(|e| e.token_ids.clone()).collect();
            let mut g = Graph::new();
            let (prefix, enc_ids) = encoder.encode_on(&mut g, true);
            let wired = model.wire(&mut g, false);
            let layout = model.batched_logits(&mut g, &wired, Some(prefix), &seqs)?;
            let (targets, mask) = answer_targets(&layout, &batch);
            let n = mask.iter().filter(|&&b| b).count();
            let loss = g.masked_cross_entropy(layout.logits, &targets, &mask);
            let loss_v = g.value(loss).item().to_f64();
            if !loss_v.is_finite() {
                return Err(TuneError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss_v * n as f64;
            epoch_count += n;
            g.backward(loss).expect("loss is scalar");
            let grads: Vec<Option<Tensor<R>>> =
                enc_ids.iter().map(|&id| g.take_grad(id)).collect();
            let mut ps = encoder.params_mut();
            opt.step(&mut ps, &grads).expect("aligned encoder params");
        }

        if model.weight_digest() != digest0 {
            return Err(TuneError::DigestChanged { epoch });
        }

        let val_loss = if assembled_val.is_empty() {
            None
        } else {
            Some(masked_loss(model, encoder, &assembled_val)?)
        };
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / epoch_count.max(1) as f64,
            val_loss,
            wall_ms: clock.now_ms() - t0,
        });

        // selection criterion: val loss when available, else train loss
        let score = val_loss.unwrap_or(epoch_loss / epoch_count.max(1) as f64);
        let improved = best.as_ref().map(|(s, _, _)| score < *s).unwrap_or(true);
        if improved {
            best = Some((
                score,
                epoch,
                encoder.params().into_iter().cloned().collect(),
            ));
            strikes = 0;
        } else if let Some(patience) = config.patience {
            strikes += 1;
            if strikes >= patience {
                break;
            }
        }
    }

    if let Some((_, epoch, params)) = best {
        log.best_epoch = epoch;
        for (dst, src) in encoder.params_mut().into_iter().zip(params) {
            *dst = src;
        }
    }
    if model.weight_digest() != digest0 {
        return Err(TuneError::DigestChanged {
            epoch: config.epochs,
        });
    }
    Ok(log)
}

/// Base-stage p-tuning: updates only the prompt encoder, early-stops on
/// validation loss, returns the encoder at its best epoch.
#[allow(clippy::too_many_arguments)]
pub fn ptune<R: Real>(
    model: &LanguageModel<R>,
    encoder: &mut SoftPromptState<R>,
    train: &[LabeledUtterance],
    val: &[LabeledUtterance],
    schema: &CanonicalSchema,
    tokenizer: &Tokenizer,
    config: &TuneConfig,
    clock: &dyn Clock,
) -> Result<TrainingLog, TuneError> {
    run_stage(model, encoder, train, val, schema, tokenizer, config, clock)
}

/// Few-shot second stage: continues from a base-stage encoder on k target
/// samples with a fresh optimizer. No validation split; runs all epochs.
pub fn continue_ptune<R: Real>(
    model: &LanguageModel<R>,
    base_encoder: &mut SoftPromptState<R>,
    fewshot: &[LabeledUtterance],
    schema: &CanonicalSchema,
    tokenizer: &Tokenizer,
    config: &TuneConfig,
    clock: &dyn Clock,
) -> Result<TrainingLog, TuneError> {
    if fewshot.is_empty() {
        return Err(TuneError::EmptyFewShotSet);
    }
    run_stage(
        model,
        base_encoder,
        fewshot,
        &[],
        schema,
        tokenizer,
        config,
        clock,
    )
}

/// Greedy canonical-form generation for one utterance. The context is the
/// utterance followed by the "intent:" marker; output text may be
/// anything, including strings not in the schema.
pub fn predict_canonical<R: Real>(
    model: &LanguageModel<R>,
    virtual_tokens: &Tensor<R>,
    utterance: &str,
    tokenizer: &Tokenizer,
    max_new_tokens: usize,
) -> Result<String, TuneError> {
    let mut ctx = tokenizer.tokenize(utterance)?;
    ctx.push(INTENT_MARKER);
    let out = model.greedy_decode(Some(virtual_tokens), &ctx, max_new_tokens)?;
    Ok(tokenizer.detokenize(&out))
}

pub const DEFAULT_MAX_NEW_TOKENS: usize = 12;
