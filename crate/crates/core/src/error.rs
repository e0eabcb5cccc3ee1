use std::path::PathBuf;

/// Errors raised anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("invalid attention mask: {0}")]
    Mask(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("invalid corpus parameters: {0}")]
    Corpus(String),

    #[error("template `{0}` has no value slot")]
    TemplateWithoutValue(String),

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("invalid token id {0}")]
    InvalidId(usize),

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("valid token set is empty")]
    EmptyValidSet,

    #[error("decode config: {0}")]
    Decode(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
