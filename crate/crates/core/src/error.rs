use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} is below the base vocabulary of {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence length {len} exceeds max_seq {max_seq}")]
    SequenceTooLong { len: usize, max_seq: usize },
    #[error("position {pos} out of range for sequence of length {len}")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("query has no mask placeholder")]
    NoMask,
    #[error("template has no {{drug}} slot")]
    NoDrugSlot,
    #[error("target set is empty")]
    EmptyTarget,
    #[error("combination needs at least 2 drugs, got {0}")]
    TooFewDrugs(usize),
    #[error("analogy answer {0:?} tokenizes to zero tokens")]
    EmptyAnswer(String),
    #[error("category {category:?} has {available} items, k-shot needs {needed}")]
    CategoryTooSmall { category: String, available: usize, needed: usize },
    #[error("no items left to evaluate after exclusion")]
    NothingToEvaluate,
    #[error("layer {layer} / head {head} out of range ({n_layers} layers, {n_heads} heads)")]
    AttentionIndex { layer: usize, head: usize, n_layers: usize, n_heads: usize },
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("empty evaluation split")]
    EmptySplit,
    #[error("passage has no sentences")]
    NoSentences,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
