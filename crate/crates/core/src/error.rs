use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("quadrature did not converge: estimate {estimate:.3e} > tolerance {tolerance:.3e} ({context})")]
    Quadrature {
        estimate: f64,
        tolerance: f64,
        context: String,
    },

    #[error("no closed form in the {0} regime; use the quadrature oracle")]
    UnsupportedRegime(String),

    #[error("capacity exceeded: {requested} points requested, cap is {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("ill-conditioned covariance: min eigenvalue {min_eigenvalue:.3e}, jitter tried {jitter:.3e}")]
    IllConditioned { min_eigenvalue: f64, jitter: f64 },

    #[error("circulant embedding failed: negative spectral fraction {negative_fraction:.3e}; try the dense backend")]
    Embedding { negative_fraction: f64 },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Domain(_) | Error::UnsupportedRegime(_) | Error::Range(_) => 3,
            Error::Overflow(_) => 4,
            Error::Quadrature { .. } => 5,
            Error::Capacity { .. } | Error::IllConditioned { .. } | Error::Embedding { .. } => 6,
            Error::Statistics(_) => 7,
            Error::Io(_) => 8,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Domain(_) => "domain",
            Error::UnsupportedRegime(_) => "unsupported-regime",
            Error::Range(_) => "range",
            Error::Overflow(_) => "overflow",
            Error::Quadrature { .. } => "quadrature",
            Error::Capacity { .. } => "capacity",
            Error::IllConditioned { .. } => "ill-conditioned",
            Error::Embedding { .. } => "embedding",
            Error::Statistics(_) => "statistics",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
