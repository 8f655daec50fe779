use thiserror::Error;

/// Errors produced across the localization pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The path direction is seen identically from transmitter and receiver,
    /// so its linear equation has no finite coefficients.
    #[error("singular path {index}: |sin(aod - aoa)| = {sin_gap:.3e}")]
    SingularPath { index: usize, sin_gap: f64 },

    #[error("insufficient paths: {usable} usable, at least {required} required")]
    InsufficientPaths { usable: usize, required: usize },

    #[error("degenerate configuration: numerical rank {rank} < {required}")]
    DegenerateConfiguration { rank: usize, required: usize },

    /// A combiner block W^H W could not be inverted/factored.
    #[error("rank-deficient combiner covariance at symbol {symbol}, subcarrier {subcarrier}")]
    RankDeficientCombiner { symbol: usize, subcarrier: usize },

    /// The location FIM is singular; carries its rank and a null-space basis.
    #[error("singular Fisher information: rank {rank} of {dim}")]
    SingularInformation {
        rank: usize,
        dim: usize,
        null_space: Vec<Vec<f64>>,
    },

    #[error("orientation unrecoverable: every candidate was infeasible")]
    OrientationUnrecoverable,

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidArgument(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
