use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Schema { what: String, message: String },

    // corpus
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("duplicate program id: {0}")]
    DuplicateProgram(String),
    #[error("empty program: {0}")]
    EmptyProgram(String),
    #[error("component {component} references unknown or invalid program {program}")]
    UnknownProgram { component: String, program: String },
    #[error("duplicate component id: {0}")]
    DuplicateComponent(String),
    #[error("component {0} has no programs")]
    EmptyComponent(String),
    #[error("instance {instance}: {message}")]
    InvalidInstance { instance: String, message: String },
    #[error("empty pattern registry")]
    EmptyRegistry,
    #[error("unknown pattern instance: {0}")]
    UnknownInstance(String),
    #[error("insufficient programs: {0}")]
    Insufficient(String),

    // tokenizer
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} is below the minimum {minimum} (alphabet + specials)")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("masking fraction {0} outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("no maskable position in program {0}")]
    NoMaskablePosition(String),

    // embedder / assessor
    #[error("empty encoded program: {0}")]
    EmptyEncoding(String),
    #[error("zero vector: {0}")]
    ZeroVector(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("program {0} missing from embedding store")]
    MissingEmbedding(String),
    #[error("embedding failed for program {program}: {source}")]
    EmbedProgram {
        program: String,
        #[source]
        source: Box<Error>,
    },
    #[error("empty benchmark pair set")]
    EmptyBenchmark,
    #[error("rank must be positive, got {0}")]
    NonPositiveRank(usize),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // evaluation
    #[error("mixed polarity in {0} result list")]
    MixedPolarity(String),
    #[error("mismatched query sets: {0}")]
    MismatchedQuerySets(String),

    // pipeline
    #[error("stale artifact {artifact}: expected config hash {expected}, found {found}")]
    StaleArtifact {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("missing stage artifact: {0}")]
    MissingStage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Schema {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable kind, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema { .. } => "schema",
            Error::MissingFile(_) => "missing_file",
            Error::DuplicateProgram(_) => "duplicate_program",
            Error::EmptyProgram(_) => "empty_program",
            Error::UnknownProgram { .. } => "unknown_program",
            Error::DuplicateComponent(_) => "duplicate_component",
            Error::EmptyComponent(_) => "empty_component",
            Error::InvalidInstance { .. } => "invalid_instance",
            Error::EmptyRegistry => "empty_registry",
            Error::UnknownInstance(_) => "unknown_instance",
            Error::Insufficient(_) => "insufficient_programs",
            Error::EmptyCorpus => "empty_corpus",
            Error::VocabTooSmall { .. } => "vocab_too_small",
            Error::FractionOutOfRange(_) => "fraction_out_of_range",
            Error::NoMaskablePosition(_) => "no_maskable_position",
            Error::EmptyEncoding(_) => "empty_encoding",
            Error::ZeroVector(_) => "zero_vector",
            Error::NonFinite(_) => "non_finite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::EmbedProgram { .. } => "embed_program",
            Error::EmptyBenchmark => "empty_benchmark",
            Error::NonPositiveRank(_) => "non_positive_rank",
            Error::Divergence { .. } => "divergence",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MixedPolarity(_) => "mixed_polarity",
            Error::MismatchedQuerySets(_) => "mismatched_query_sets",
            Error::StaleArtifact { .. } => "stale_artifact",
            Error::MissingStage(_) => "missing_stage",
        }
    }
}
