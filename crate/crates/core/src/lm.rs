//! Small decoder-only transformer with learned positional embeddings,
//! pre-norm blocks and a tanh FFN, plus word-level pretraining, freezing
//! and greedy decoding with an optional soft-token prefix.
//!
//! Soft prefix rows occupy positions 0..n-1 and token embeddings continue
//! at n, so the assembled sequence is contiguous from position 0 whatever
//! the prefix length.

use crate::clock::Clock;
use crate::digest::{digest_tensors, Digest};
use crate::graph::{Graph, TensorId};
use crate::optim::Optimizer;
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::tokenizer::{Tokenizer, EOS, PAD};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
}

impl LmConfig {
    /// Desk-scale default; vocab size is filled in from the corpus.
    pub fn toy(vocab_size: usize) -> Self {
        LmConfig {
            layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 256,
            max_seq_len: 64,
            vocab_size,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LmError {
    LineTooLong { line: usize, len: usize, max: usize },
    ContextOverflow { needed: usize, max: usize },
    PrefixDimMismatch { got: usize, model_dim: usize },
    EmptyCorpus,
    NonFiniteLoss { epoch: usize },
    WeightCountMismatch { expected: usize, got: usize },
    WeightShapeMismatch { expected: (usize, usize), got: (usize, usize) },
}

impl fmt::Display for LmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LmError::LineTooLong { line, len, max } => {
                write!(f, "corpus line {line} has {len} tokens, max_seq_len is {max}")
            }
            LmError::ContextOverflow { needed, max } => {
                write!(f, "sequence needs {needed} positions, max_seq_len is {max}")
            }
            LmError::PrefixDimMismatch { got, model_dim } => {
                write!(f, "soft prefix width {got} != model_dim {model_dim}")
            }
            LmError::EmptyCorpus => write!(f, "pretraining corpus is empty"),
            LmError::NonFiniteLoss { epoch } => {
                write!(f, "non-finite pretraining loss at epoch {epoch}")
            }
            LmError::WeightCountMismatch { expected, got } => {
                write!(f, "checkpoint has {got} weight arrays, model needs {expected}")
            }
            LmError::WeightShapeMismatch { expected, got } => {
                write!(f, "weight shape {got:?} does not match expected {expected:?}")
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Block<R> {
    ln1_gamma: Tensor<R>,
    ln1_beta: Tensor<R>,
    w_q: Tensor<R>,
    b_q: Tensor<R>,
    w_k: Tensor<R>,
    b_k: Tensor<R>,
    w_v: Tensor<R>,
    b_v: Tensor<R>,
    w_o: Tensor<R>,
    b_o: Tensor<R>,
    ln2_gamma: Tensor<R>,
    ln2_beta: Tensor<R>,
    w_ff1: Tensor<R>,
    b_ff1: Tensor<R>,
    w_ff2: Tensor<R>,
    b_ff2: Tensor<R>,
}

#[derive(Clone, Debug)]
pub struct LanguageModel<R> {
    config: LmConfig,
    tok_embedding: Tensor<R>,
    pos_embedding: Tensor<R>,
    blocks: Vec<Block<R>>,
    ln_f_gamma: Tensor<R>,
    ln_f_beta: Tensor<R>,
    w_out: Tensor<R>,
    b_out: Tensor<R>,
    frozen: bool,
}

struct WiredBlock {
    ln1: (TensorId, TensorId),
    qkv: [(TensorId, TensorId); 3],
    out: (TensorId, TensorId),
    ln2: (TensorId, TensorId),
    ff1: (TensorId, TensorId),
    ff2: (TensorId, TensorId),
}

pub struct WiredLm {
    tok_emb: TensorId,
    pos_emb: TensorId,
    blocks: Vec<WiredBlock>,
    ln_f: (TensorId, TensorId),
    w_out: TensorId,
    b_out: TensorId,
    pub param_ids: Vec<TensorId>,
}

/// Row layout of a batched forward: sequence `b` occupies rows
/// `b*block_len .. (b+1)*block_len`, prefix rows first.
pub struct BatchLayout {
    pub logits: TensorId,
    pub block_len: usize,
    pub n_prefix: usize,
    pub seq_lens: Vec<usize>,
}

impl BatchLayout {
    pub fn row(&self, seq: usize, element: usize) -> usize {
        seq * self.block_len + element
    }
}

impl<R: Real> LanguageModel<R> {
    pub fn init(config: LmConfig, rng: &mut Rng) -> Self {
        assert!(config.model_dim % config.heads == 0, "heads must divide model_dim");
        let d = config.model_dim;
        let mut r = rng.substream("lm/init");
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let mut t = Tensor::zeros(rows, cols);
            for v in t.data_mut() {
                *v = R::from_f64(r.normal() * std);
            }
            t
        };
        let blocks = (0..config.layers)
            .map(|_| Block {
                ln1_gamma: Tensor::filled(1, d, R::ONE),
                ln1_beta: Tensor::zeros(1, d),
                w_q: normal(d, d, 0.02),
                b_q: Tensor::zeros(1, d),
                w_k: normal(d, d, 0.02),
                b_k: Tensor::zeros(1, d),
                w_v: normal(d, d, 0.02),
                b_v: Tensor::zeros(1, d),
                w_o: normal(d, d, 0.02),
                b_o: Tensor::zeros(1, d),
                ln2_gamma: Tensor::filled(1, d, R::ONE),
                ln2_beta: Tensor::zeros(1, d),
                w_ff1: normal(d, config.ffn_dim, 0.02),
                b_ff1: Tensor::zeros(1, config.ffn_dim),
                w_ff2: normal(config.ffn_dim, d, 0.02),
                b_ff2: Tensor::zeros(1, d),
            })
            .collect();
        LanguageModel {
            config,
            tok_embedding: normal(config.vocab_size, d, 0.02),
            pos_embedding: normal(config.max_seq_len, d, 0.01),
            blocks,
            ln_f_gamma: Tensor::filled(1, d, R::ONE),
            ln_f_beta: Tensor::zeros(1, d),
            w_out: normal(d, config.vocab_size, 0.02),
            b_out: Tensor::zeros(1, config.vocab_size),
            frozen: false,
        }
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// All weights in canonical order (checkpoint and digest order).
    pub fn params(&self) -> Vec<&Tensor<R>> {
        let mut v: Vec<&Tensor<R>> = Vec::new();
        v.push(&self.tok_embedding);
        v.push(&self.pos_embedding);
        for b in &self.blocks {
            v.extend([
                &b.ln1_gamma,
                &b.ln1_beta,
                &b.w_q,
                &b.b_q,
                &b.w_k,
                &b.b_k,
                &b.w_v,
                &b.b_v,
                &b.w_o,
                &b.b_o,
                &b.ln2_gamma,
                &b.ln2_beta,
                &b.w_ff1,
                &b.b_ff1,
                &b.w_ff2,
                &b.b_ff2,
            ]);
        }
        v.push(&self.ln_f_gamma);
        v.push(&self.ln_f_beta);
        v.push(&self.w_out);
        v.push(&self.b_out);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        let mut v: Vec<&mut Tensor<R>> = Vec::new();
        v.push(&mut self.tok_embedding);
        v.push(&mut self.pos_embedding);
        for b in &mut self.blocks {
            v.extend([
                &mut b.ln1_gamma,
                &mut b.ln1_beta,
                &mut b.w_q,
                &mut b.b_q,
                &mut b.w_k,
                &mut b.b_k,
                &mut b.w_v,
                &mut b.b_v,
                &mut b.w_o,
                &mut b.b_o,
                &mut b.ln2_gamma,
                &mut b.ln2_beta,
                &mut b.w_ff1,
                &mut b.b_ff1,
                &mut b.w_ff2,
                &mut b.b_ff2,
            ]);
        }
        v.push(&mut self.ln_f_gamma);
        v.push(&mut self.ln_f_beta);
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.push(String::from("tok_embedding"));
        v.push(String::from("pos_embedding"));
        for i in 0..self.blocks.len() {
            for name in [
                "ln1_gamma", "ln1_beta", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
                "ln2_gamma", "ln2_beta", "w_ff1", "b_ff1", "w_ff2", "b_ff2",
            ] {
                v.push(format!("block{i}.{name}"));
            }
        }
        v.push(String::from("ln_f_gamma"));
        v.push(String::from("ln_f_beta"));
        v.push(String::from("w_out"));
        v.push(String::from("b_out"));
        v
    }

    pub fn weight_digest(&self) -> Digest {
        digest_tensors(self.params().into_iter())
    }

    /// Rebuilds a model from weights in canonical parameter order
    /// (checkpoint load path). Shapes must match the config exactly.
    pub fn from_weights(
        config: LmConfig,
        weights: Vec<Tensor<R>>,
        frozen: bool,
    ) -> Result<Self, LmError> {
        let mut model = LanguageModel::init(config, &mut Rng::new(0));
        {
            let slots = model.params_mut();
            if slots.len() != weights.len() {
                return Err(LmError::WeightCountMismatch {
                    expected: slots.len(),
                    got: weights.len(),
                });
            }
            for (slot, w) in slots.into_iter().zip(weights) {
                if slot.shape() != w.shape() {
                    return Err(LmError::WeightShapeMismatch {
                        expected: slot.shape(),
                        got: w.shape(),
                    });
                }
                *slot = w;
            }
        }
        model.frozen = frozen;
        Ok(model)
    }

    /// Marks the model frozen and returns the weight digest the frozen
    /// state is pinned to.
    pub fn freeze(&mut self) -> Digest {
        self.frozen = true;
        self.weight_digest()
    }

    /// Registers every weight on the graph. `trainable` may only be true
    /// while the model is unfrozen (pretraining).
    pub fn wire(&self, g: &mut Graph<R>, trainable: bool) -> WiredLm {
        assert!(
            !(trainable && self.frozen),
            "frozen model cannot be wired trainable"
        );
        let mut param_ids = Vec::new();
        let reg = |g: &mut Graph<R>, t: &Tensor<R>, ids: &mut Vec<TensorId>| {
            let id = if trainable { g.param(t) } else { g.constant(t.clone()) };
            ids.push(id);
            id
        };
        let tok_emb = reg(g, &self.tok_embedding, &mut param_ids);
        let pos_emb = reg(g, &self.pos_embedding, &mut param_ids);
        let blocks = self
            .blocks
            .iter()
            .map(|b| WiredBlock {
                ln1: (
                    reg(g, &b.ln1_gamma, &mut param_ids),
                    reg(g, &b.ln1_beta, &mut param_ids),
                ),
                qkv: [
                    (reg(g, &b.w_q, &mut param_ids), reg(g, &b.b_q, &mut param_ids)),
                    (reg(g, &b.w_k, &mut param_ids), reg(g, &b.b_k, &mut param_ids)),
                    (reg(g, &b.w_v, &mut param_ids), reg(g, &b.b_v, &mut param_ids)),
                ],
                out: (reg(g, &b.w_o, &mut param_ids), reg(g, &b.b_o, &mut param_ids)),
                ln2: (
                    reg(g, &b.ln2_gamma, &mut param_ids),
                    reg(g, &b.ln2_beta, &mut param_ids),
                ),
                ff1: (
                    reg(g, &b.w_ff1, &mut param_ids),
                    reg(g, &b.b_ff1, &mut param_ids),
                ),
                ff2: (
                    reg(g, &b.w_ff2, &mut param_ids),
                    reg(g, &b.b_ff2, &mut param_ids),
                ),
            })
            .collect();
        let ln_f = (
            reg(g, &self.ln_f_gamma, &mut param_ids),
            reg(g, &self.ln_f_beta, &mut param_ids),
        );
        let w_out = reg(g, &self.w_out, &mut param_ids);
        let b_out = reg(g, &self.b_out, &mut param_ids);
        WiredLm {
            tok_emb,
            pos_emb,
            blocks,
            ln_f,
            w_out,
            b_out,
            param_ids,
        }
    }

    /// Forward over a batch of sequences, all given the same soft prefix.
    /// Sequences are padded to the batch max with PAD; padded rows produce
    /// logits the caller must mask out.
    pub fn batched_logits(
        &self,
        g: &mut Graph<R>,
        wired: &WiredLm,
        prefix: Option<TensorId>,
        seqs: &[Vec<u32>],
    ) -> Result<BatchLayout, LmError> {
        assert!(!seqs.is_empty(), "batched_logits: empty batch");
        let d = self.config.model_dim;
        let n_prefix = match prefix {
            Some(p) => {
                let t = g.value(p);
                if t.cols() != d {
                    return Err(LmError::PrefixDimMismatch {
                        got: t.cols(),
                        model_dim: d,
                    });
                }
                t.rows()
            }
            None => 0,
        };
        let max_len = seqs.iter().map(Vec::len).max().unwrap();
        let block_len = n_prefix + max_len;
        if block_len > self.config.max_seq_len {
            return Err(LmError::ContextOverflow {
                needed: block_len,
                max: self.config.max_seq_len,
            });
        }
        let batch = seqs.len();

        // [prefix; tokens] per sequence, stacked
        let mut parts: Vec<TensorId> = Vec::with_capacity(batch * 2);
        for s in seqs {
            let mut padded = s.clone();
            padded.resize(max_len, PAD);
            if let Some(p) = prefix {
                parts.push(p);
            }
            parts.push(g.gather(wired.tok_emb, &padded));
        }
        let mut x = g.concat_rows(&parts);

        // positions 0..block_len-1, tiled per sequence
        let pos_slice = g.slice_rows(wired.pos_emb, 0, block_len);
        let pos_tile: Vec<TensorId> = (0..batch).map(|_| pos_slice).collect();
        let pos = g.concat_rows(&pos_tile);
        x = g.add(x, pos);

        // causal mask shared across sequences, heads and layers
        let neg = R::from_f64(-1e9);
        let mask = g.constant(Tensor::from_fn(block_len, block_len, |r, c| {
            if c > r {
                neg
            } else {
                R::ZERO
            }
        }));

        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / libm::sqrt(dh as f64);

        for blk in &wired.blocks {
            let a = g.layer_norm(x, blk.ln1.0, blk.ln1.1);
            let q = g.matmul(a, blk.qkv[0].0);
            let q = g.add_bias(q, blk.qkv[0].1);
            let k = g.matmul(a, blk.qkv[1].0);
            let k = g.add_bias(k, blk.qkv[1].1);
            let v = g.matmul(a, blk.qkv[2].0);
            let v = g.add_bias(v, blk.qkv[2].1);

            let mut seq_outs: Vec<TensorId> = Vec::with_capacity(batch);
            for b in 0..batch {
                let r0 = b * block_len;
                let r1 = r0 + block_len;
                let qb = g.slice_rows(q, r0, r1);
                let kb = g.slice_rows(k, r0, r1);
                let vb = g.slice_rows(v, r0, r1);
                let mut head_outs: Vec<TensorId> = Vec::with_capacity(heads);
                for h in 0..heads {
                    let c0 = h * dh;
                    let c1 = c0 + dh;
                    let qh = g.slice_cols(qb, c0, c1);
                    let kh = g.slice_cols(kb, c0, c1);
                    let vh = g.slice_cols(vb, c0, c1);
                    let scores = g.matmul_nt(qh, kh);
                    let scores = g.scale(scores, scale);
                    let scores = g.add(scores, mask);
                    let attn = g.row_softmax(scores);
                    head_outs.push(g.matmul(attn, vh));
                }
                seq_outs.push(g.concat_cols(&head_outs));
            }
            let o = g.concat_rows(&seq_outs);
            let o = g.matmul(o, blk.out.0);
            let o = g.add_bias(o, blk.out.1);
            x = g.add(x, o);

            let f = g.layer_norm(x, blk.ln2.0, blk.ln2.1);
            let ff = g.matmul(f, blk.ff1.0);
            let ff = g.add_bias(ff, blk.ff1.1);
            let ff = g.tanh(ff);
            let ff = g.matmul(ff, blk.ff2.0);
            let ff = g.add_bias(ff, blk.ff2.1);
            x = g.add(x, ff);
        }

        let y = g.layer_norm(x, wired.ln_f.0, wired.ln_f.1);
        let logits = g.matmul(y, wired.w_out);
        let logits = g.add_bias(logits, wired.b_out);
        Ok(BatchLayout {
            logits,
            block_len,
            n_prefix,
            seq_lens: seqs.iter().map(Vec::len).collect(),
        })
    }

    /// Per-position logits for one sequence: (n_prefix + len) x vocab.
    pub fn forward_with_prefix(
        &self,
        prefix: Option<&Tensor<R>>,
        token_ids: &[u32],
    ) -> Result<Tensor<R>, LmError> {
        assert!(!token_ids.is_empty(), "forward_with_prefix: empty sequence");
        let mut g = Graph::new();
        let wired = self.wire(&mut g, false);
        let pid = prefix.map(|p| g.constant(p.clone()));
        let layout = self.batched_logits(&mut g, &wired, pid, &[token_ids.to_vec()])?;
        Ok(g.value(layout.logits).clone())
    }

    /// Greedy argmax decoding until EOS, `max_new_tokens`, or the position
    /// limit. Deterministic; ties resolve to the lowest token id.
    pub fn greedy_decode(
        &self,
        prefix: Option<&Tensor<R>>,
        context_ids: &[u32],
        max_new_tokens: usize,
    ) -> Result<Vec<u32>, LmError> {
        let n_prefix = prefix.map(|p| p.rows()).unwrap_or(0);
        if n_prefix + context_ids.len() + 1 > self.config.max_seq_len {
            return Err(LmError::ContextOverflow {
                needed: n_prefix + context_ids.len() + 1,
                max: self.config.max_seq_len,
            });
        }
        let mut seq = context_ids.to_vec();
        let mut out = Vec::new();
        for _ in 0..max_new_tokens {
            let logits = self.forward_with_prefix(prefix, &seq)?;
            let last = logits.row(logits.rows() - 1);
            let mut best = 0usize;
            for (j, &v) in last.iter().enumerate() {
                if v > last[best] {
                    best = j;
                }
            }
            let tok = best as u32;
            if tok == EOS {
                break;
            }
            out.push(tok);
            seq.push(tok);
            if n_prefix + seq.len() + 1 > self.config.max_seq_len {
                break;
            }
        }
        Ok(out)
    }

    /// Pooled next-token cross-entropy over a set of token lines,
    /// forward-only. The baseline for an untrained model is ln(vocab).
    pub fn mean_next_token_loss(&self, seqs: &[Vec<u32>]) -> Result<f64, LmError> {
        assert!(!seqs.is_empty());
        let mut total = 0.0f64;
        let mut count = 0usize;
        for chunk in seqs.chunks(16) {
            let mut g = Graph::new();
            let wired = self.wire(&mut g, false);
            let layout = self.batched_logits(&mut g, &wired, None, chunk)?;
            let (targets, mask) = next_token_targets(&layout, chunk);
            let n = mask.iter().filter(|&&b| b).count();
            let loss = g.masked_cross_entropy(layout.logits, &targets, &mask);
            total += g.value(loss).item().to_f64() * n as f64;
            count += n;
        }
        Ok(total / count.max(1) as f64)
    }
}

/// Next-token targets/mask for plain language modelling over a batch
/// layout with no prefix: row r of sequence b predicts element r+1.
pub fn next_token_targets(layout: &BatchLayout, seqs: &[Vec<u32>]) -> (Vec<u32>, Vec<bool>) {
    let rows = seqs.len() * layout.block_len;
    let mut targets = alloc::vec![0u32; rows];
    let mut mask = alloc::vec![false; rows];
    for (b, s) in seqs.iter().enumerate() {
        for r in 0..s.len().saturating_sub(1) {
            let row = layout.row(b, layout.n_prefix + r);
            targets[row] = s[r + 1];
            mask[row] = true;
        }
    }
    (targets, mask)
}

#[derive(Clone, Copy, Debug)]
pub struct PretrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_ratio: f64,
}

impl Default for PretrainParams {
    fn default() -> Self {
        PretrainParams {
            epochs: 12,
            batch_size: 16,
            learning_rate: 3e-3,
            holdout_ratio: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PretrainLog {
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    pub wall_ms: Vec<u64>,
}

pub struct Pretrained<R> {
    pub model: LanguageModel<R>,
    pub tokenizer: Tokenizer,
    pub log: PretrainLog,
}

/// Word-level next-token pretraining on a line corpus. Deterministic per
/// seed; stands in for the large pretrained LM the method assumes.
pub fn pretrain<R: Real>(
    corpus: &[String],
    arch: impl Fn(usize) -> LmConfig,
    params: PretrainParams,
    seed: u64,
    clock: &dyn Clock,
) -> Result<Pretrained<R>, LmError> {
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let tokenizer = Tokenizer::build(corpus.iter().map(String::as_str));
    let config = arch(tokenizer.vocab_size());
    let root = Rng::new(seed);

    let mut lines: Vec<Vec<u32>> = Vec::with_capacity(corpus.len());
    for (i, line) in corpus.iter().enumerate() {
        let mut ids = tokenizer.tokenize(line).map_err(|_| LmError::LineTooLong {
            line: i,
            len: 0,
            max: config.max_seq_len,
        })?;
        ids.push(EOS);
        if ids.len() > config.max_seq_len {
            return Err(LmError::LineTooLong {
                line: i,
                len: ids.len(),
                max: config.max_seq_len,
            });
        }
        lines.push(ids);
    }

    let mut order: Vec<usize> = (0..lines.len()).collect();
    root.substream("pretrain/holdout").shuffle(&mut order);
    let n_holdout = ((lines.len() as f64 * params.holdout_ratio) as usize).max(1);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);
    let holdout: Vec<Vec<u32>> = holdout_idx.iter().map(|&i| lines[i].clone()).collect();
    let mut train: Vec<Vec<u32>> = train_idx.iter().map(|&i| lines[i].clone()).collect();

    let mut model = LanguageModel::<R>::init(config, &mut root.substream("pretrain/init"));
    let mut opt = Optimizer::<R>::adam(params.learning_rate);
    let mut shuffle_rng = root.substream("pretrain/shuffle");
    let mut log = PretrainLog::default();
    let t0 = clock.now_ms();

    for epoch in 0..params.epochs {
        shuffle_rng.shuffle(&mut train);
        let mut epoch_loss = 0.0f64;
        let mut epoch_tokens = 0usize;
        for chunk in train.chunks(params.batch_size.max(1)) {
            let mut g = Graph::new();
            let wired = model.wire(&mut g, true);
            let layout = model.batched_logits(&mut g, &wired, None, chunk)?;
            let (targets, mask) = next_token_targets(&layout, chunk);
            let n = mask.iter().filter(|&&b| b).count();
            let loss = g.masked_cross_entropy(layout.logits, &targets, &mask);
            let loss_v = g.value(loss).item().to_f64();
            if !loss_v.is_finite() {
                return Err(LmError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss_v * n as f64;
            epoch_tokens += n;
            g.backward(loss).expect("loss is scalar");
            let grads: Vec<Option<Tensor<R>>> = wired
                .param_ids
                .iter()
                .map(|&id| g.take_grad(id))
                .collect();
            let mut ps = model.params_mut();
            opt.step(&mut ps, &grads).expect("aligned params");
        }
        log.train_loss.push(epoch_loss / epoch_tokens.max(1) as f64);
        log.holdout_loss.push(model.mean_next_token_loss(&holdout)?);
        log.wall_ms.push(clock.now_ms() - t0);
    }

    Ok(Pretrained {
        model,
        tokenizer,
        log,
    })
}
