use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("character {0:?} is not in the lexicon")]
    UnknownCharacter(char),
    #[error("character {0:?} is not in the text vocabulary")]
    UnknownTextCharacter(char),
    #[error("group size must be at least 1, got {0}")]
    InvalidGroupSize(i64),
    #[error("invalid run-length encoding: {0}")]
    InvalidRunLengths(String),
    #[error("sequence is empty")]
    EmptySequence,
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("no turns to render")]
    EmptyDialogue,
    #[error("modality mismatch: {0}")]
    ModalityMismatch(String),
    #[error("unit id {unit} out of range for vocabulary of {vocab}")]
    UnitOutOfRange { unit: u32, vocab: usize },
    #[error("speech slot count {slots} does not match adapted group count {groups}")]
    SlotCountMismatch { slots: usize, groups: usize },
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss (llm={llm}, group={group})")]
    NonFiniteLoss { llm: f64, group: f64 },
    #[error("all logits are masked or -inf")]
    NoSampleableToken,
    #[error("invalid decode context: {0}")]
    InvalidContext(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
