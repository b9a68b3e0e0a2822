use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while reading corpora, fitting, predicting
/// or evaluating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("line {line}: count {count} for term {term} must be positive")]
    NonPositiveCount { line: usize, term: usize, count: i64 },

    #[error("line {line}: term id {term} outside vocabulary of size {vocab_size}")]
    TermOutOfRange {
        line: usize,
        term: usize,
        vocab_size: usize,
    },

    #[error("response count mismatch: {documents} documents but {responses} responses")]
    ResponseCountMismatch { documents: usize, responses: usize },

    #[error("line {line}: cannot parse response {value:?}")]
    BadResponse { line: usize, value: String },

    #[error("empty vocabulary after pruning")]
    EmptyVocabulary,

    #[error("document {doc}: nonpositive argument {value} to log transform")]
    NonPositiveLog { doc: usize, value: f64 },

    #[error("{function}: argument {value} outside the domain")]
    Domain { function: &'static str, value: f64 },

    #[error("cannot split {documents} documents into {folds} folds")]
    TooFewDocuments { documents: usize, folds: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("token {token}: non-finite logit")]
    NonFiniteLogit { token: usize },

    #[error("ELBO decreased from {previous} to {current}")]
    ElboDecrease { previous: f64, current: f64 },

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("response {0} is not a nonnegative integer")]
    InvalidCountResponse(f64),

    #[error("undefined {0}: input is constant")]
    ConstantInput(&'static str),

    #[error("term id {term} outside model vocabulary of size {vocab_size}")]
    VocabularyMismatch { term: usize, vocab_size: usize },

    #[error("model file version {found} is not supported (expected {expected})")]
    ModelVersion { found: u64, expected: u64 },

    #[error("model file schema error: {0}")]
    ModelSchema(String),

    #[error("document {doc}: {source}")]
    InDocument {
        doc: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_document(self, doc: usize) -> Error {
        Error::InDocument {
            doc,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_fold(self, fold: usize) -> Error {
        Error::InFold {
            fold,
            source: Box::new(self),
        }
    }

    /// Strips document and fold context, returning the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::InDocument { source, .. } | Error::InFold { source, .. } => source.root(),
            other => other,
        }
    }
}
