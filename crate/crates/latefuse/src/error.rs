//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid class vector: {0}")]
    InvalidClassVector(String),

    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid polarity code {0} (expected 0, 1 or 2)")]
    InvalidPolarity(u8),

    #[error("ids are not disjoint across partitions: {0:?} appears twice")]
    OverlappingSplits(String),

    #[error("{family}: invalid hyperparameter {name}: {detail}")]
    InvalidHyperparameter {
        family: String,
        name: String,
        detail: String,
    },

    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("channel {channel} is constant (zero standard deviation)")]
    ConstantChannel { channel: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("unsupported schema version {got} (expected {expected})")]
    SchemaVersion { expected: u32, got: u32 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid search budget: {0}")]
    InvalidBudget(String),

    #[error("all search trials failed")]
    AllTrialsFailed,

    #[error("cannot build cross-validation folds: {0}")]
    FoldConstruction(String),

    #[error("duplicate id {0:?} in modality file")]
    DuplicateId(String),

    #[error("no overlapping ids between the two modalities")]
    NoOverlap,

    #[error("invalid synthetic data config: {0}")]
    InvalidConfig(String),

    #[error("fusion weight {0} outside [0, 1]")]
    InvalidWeight(f64),

    #[error("line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },

    #[error("invalid stopword entry {0:?}: contains whitespace")]
    InvalidStopword(String),

    #[error("invalid lexicon entry {word:?}: {detail}")]
    InvalidLexiconEntry { word: String, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
