use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weight vector")]
    DegenerateWeights,

    #[error("label sets do not match")]
    LabelSetMismatch,

    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("unknown feature {id} (model has {num_inputs} input features)")]
    UnknownFeature { id: u32, num_inputs: usize },

    #[error("invalid feature vector: {0}")]
    InvalidFeatures(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("divergence; check feature scaling")]
    Divergence,

    #[error("impossible chain")]
    ImpossibleChain,

    #[error("enumeration budget exceeded: {size} sequences > {budget}")]
    BudgetExceeded { size: u128, budget: usize },

    #[error("agreement undefined: disjoint supports")]
    DisjointSupports,

    #[error("dual divergence")]
    DualDivergence,

    #[error("invalid label mapping: {0}")]
    InvalidMapping(String),

    #[error("agreement failed on unlabeled instance {instance}: {source}")]
    Agreement {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("EM monotonicity violated at iteration {iteration}: objective rose by {increase:e}")]
    MonotonicityViolated { iteration: usize, increase: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unmapped label `{0}`")]
    UnmappedLabel(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("malformed tag `{0}`")]
    MalformedTag(String),

    #[error("zero baseline error")]
    ZeroBaselineError,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence
            | Error::DualDivergence
            | Error::MonotonicityViolated { .. }
            | Error::DegenerateWeights
            | Error::ImpossibleChain
            | Error::DisjointSupports => true,
            Error::Agreement { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

/// Reads a whole file, naming it in the error.
pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
