use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance is not positive definite: {0}")]
    Singular(String),

    #[error("input covariance block is near-singular (condition number {condition:.3e})")]
    SingularBlock { condition: f64 },

    #[error("observation at frame {t} has zero probability under every state")]
    ImpossibleObservation { t: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("unsupported model document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("state space too large for enumeration: {paths} paths")]
    StateSpaceTooLarge { paths: f64 },

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("log-likelihood became non-finite at EM iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Document(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::SingularBlock { .. }
                | Error::ImpossibleObservation { .. }
                | Error::NonFinite { .. }
                | Error::StateSpaceTooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
