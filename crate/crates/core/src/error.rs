use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A dataset line that is not a well-formed record.
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    /// A well-formed record that violates a field invariant.
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    /// Retryable failure talking to a remote provider.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("degenerate embedding: provider returned a zero or non-finite vector")]
    DegenerateEmbedding,
    #[error("duplicate entry id {0:?}")]
    DuplicateEntry(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("evaluator unavailable: {0}")]
    EvaluatorUnavailable(String),
    #[error("malformed verdict: {0}")]
    MalformedVerdict(String),
    #[error("oracle misuse: {0}")]
    OracleMisuse(String),
    #[error("gini impurity is undefined for an empty node")]
    UndefinedImpurity,
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    /// A batch operation stopped part-way; `processed` items completed first.
    #[error("aborted after {processed} items: {source}")]
    Aborted {
        processed: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Failures that say nothing about the statement being judged.
    pub fn is_deferrable(&self) -> bool {
        matches!(
            self,
            Error::Transport(_)
                | Error::EvaluatorUnavailable(_)
                | Error::MalformedVerdict(_)
                | Error::DegenerateEmbedding
        )
    }
}
