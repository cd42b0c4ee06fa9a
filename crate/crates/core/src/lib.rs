//! Masked-language-model literature mining.
//!
//! The crate trains a small byte-level BPE tokenizer and a pre-layer-norm
//! transformer encoder with a tied MLM head, then uses the per-position
//! predictive distributions at `<mask>` slots for query-target (QT)
//! scoring: the probability mass a masked slot assigns to a target token
//! set. On top of that sit analogy evaluation, forward-chaining temporal
//! ranking of drug candidates, and passage highlighting.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std` (only `alloc` is required). File formats and the
//! command-line front end live in the `qtmine` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analogy;
pub mod corpus;
pub mod error;
pub mod fcrank;
pub mod highlight;
pub mod model;
pub mod qt;
pub mod real;
pub mod rng;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
pub use model::{ForwardOut, ModelConfig, Params};
pub use real::Real;
pub use tokenizer::{TokenSeq, Vocab};
