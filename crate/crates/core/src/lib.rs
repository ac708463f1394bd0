//! Intent classification as canonical-form generation with a frozen toy
//! language model and a tunable soft prompt.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`graph`], [`optim`], [`gradcheck`]: a dense reverse-mode
//!   autodiff engine over 2-D tensors, generic over [`real::Real`] so the
//!   same code runs in f32 for training and f64 for gradient checking.
//! - [`tokenizer`], [`lm`]: word-level tokenizer and a small decoder-only
//!   transformer with pretraining, freezing, prefixed forward and greedy
//!   decoding.
//! - [`encoder`]: the trainable prompt encoder (2-layer LSTM over learned
//!   seed vectors, projected to virtual-token embeddings).
//! - [`tuner`]: sequence assembly with answer-only loss masking, base and
//!   few-shot p-tuning stages, canonical-form prediction.
//! - [`schema`], [`embed`], [`resolver`]: canonical-form schema with a
//!   linter, skip-gram static embeddings, and nearest-neighbour resolution
//!   from generated text back to an intent label.
//! - [`data`], [`synth`]: dataset model, split/sampling protocols and the
//!   synthetic multi-domain world used for desk-scale experiments.
//!
//! `no_std` + `alloc`; all IO, file formats and the CLI live in the
//! companion `canform-cli` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod clock;
pub mod data;
pub mod digest;
pub mod embed;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod lm;
pub mod optim;
pub mod real;
pub mod resolver;
pub mod rng;
pub mod schema;
pub mod synth;
pub mod tensor;
pub mod tokenizer;
pub mod tuner;

pub use clock::{Clock, NullClock};
pub use data::LabeledUtterance;
pub use graph::{Graph, TensorId};
pub use real::Real;
pub use rng::Rng;
pub use schema::CanonicalSchema;
pub use tensor::Tensor;
