use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrimapError>;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum TrimapError {
    /// An input value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A tunable is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The dataset is too small for the requested operation.
    #[error("too few points: {0}")]
    TooFewPoints(String),

    /// Both similarities of a triplet are zero, so its satisfaction
    /// probability is undefined.
    #[error("degenerate pair: both similarities are zero")]
    DegeneratePair,

    /// A neighbor graph does not satisfy its structural invariants.
    #[error("malformed neighbor graph: {0}")]
    MalformedGraph(String),

    /// The operation needs per-point labels but the dataset has none.
    #[error("dataset has no labels but the operation requires them")]
    MissingLabels,

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The descent loop lost control of the loss.
    #[error(
        "optimization diverged at iteration {iteration}: loss {loss:.6e} exceeds \
         1000x the initial loss {initial:.6e}"
    )]
    Diverged {
        iteration: usize,
        loss: f64,
        initial: f64,
        /// Loss values recorded up to the failure, for post-mortems.
        trace: Vec<f64>,
    },

    /// A text input could not be parsed.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        /// 1-based physical line number.
        line: usize,
        message: String,
    },

    /// A file or array that must hold data is empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// An I/O failure, annotated with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrimapError {
    /// Process exit code for the CLI: usage-style problems (bad files, bad
    /// parameter ranges, malformed inputs) exit 2, internal numeric failures
    /// exit 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrimapError::Parameter(_)
            | TrimapError::TooFewPoints(_)
            | TrimapError::MissingLabels
            | TrimapError::Parse { .. }
            | TrimapError::EmptyInput(_)
            | TrimapError::Shape(_)
            | TrimapError::Io { .. } => 2,
            _ => 1,
        }
    }
}
