use thiserror::Error;

pub type Result<T, E = LergError> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variants map onto stable CLI exit codes via [`LergError::exit_code`].
#[derive(Debug, Error)]
pub enum LergError {
    #[error("text contains no non-whitespace content")]
    EmptyText,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("input of size {size} exceeds enumeration cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("normal equations are singular beyond ridge repair: {0}")]
    SingularSystem(String),

    #[error("probability {prob:e} at step {step} is below the floor {floor:e}")]
    ReferenceUnderflow { step: usize, prob: f64, floor: f64 },

    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("model protocol error: {0}")]
    ModelProtocolError(String),

    #[error("score domain error: {0}")]
    ScoreDomainError(String),

    #[error("batch element {index} failed: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<LergError>,
    },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("model `{0}` does not produce normalized probabilities")]
    Unnormalized(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LergError {
    /// Short machine-readable code used in error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            LergError::EmptyText => "empty_text",
            LergError::DegenerateInput(_) => "degenerate_input",
            LergError::DomainError(_) => "domain_error",
            LergError::TooLarge { .. } => "too_large",
            LergError::SingularSystem(_) => "singular_system",
            LergError::ReferenceUnderflow { .. } => "reference_underflow",
            LergError::RemoteUnavailable(_) => "remote_unavailable",
            LergError::ModelProtocolError(_) => "model_protocol_error",
            LergError::ScoreDomainError(_) => "score_domain_error",
            LergError::BatchElement { source, .. } => source.code(),
            LergError::EmptyCorpus => "empty_corpus",
            LergError::Unnormalized(_) => "unnormalized",
            LergError::Validation(_) => "validation",
            LergError::Io(_) => "io",
            LergError::Json(_) => "json",
        }
    }

    /// 0 success, 1 validation, 2 resource/cap, 3 model transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            LergError::TooLarge { .. } | LergError::Io(_) => 2,
            LergError::RemoteUnavailable(_) | LergError::ModelProtocolError(_) => 3,
            LergError::BatchElement { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub(crate) fn at_index(self, index: usize) -> LergError {
        match self {
            e @ LergError::BatchElement { .. } => e,
            e => LergError::BatchElement {
                index,
                source: Box::new(e),
            },
        }
    }
}
