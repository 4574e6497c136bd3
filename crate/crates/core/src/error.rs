use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate energies between state {populated} and state {excited} (E = {energy})")]
    Degeneracy {
        populated: usize,
        excited: usize,
        energy: f64,
    },

    #[error("gradient B = {b} sits {distance} from the resonance |U{gamma}| = {resonance}; closer than {limit} (pole)")]
    Resonance {
        gamma: usize,
        b: f64,
        resonance: f64,
        distance: f64,
        limit: f64,
    },

    #[error("{0}")]
    Domain(String),

    #[error("system too large: dimension {dimension} exceeds limit {limit}; largest allowed size is {suggestion}")]
    TooLarge {
        dimension: usize,
        limit: usize,
        suggestion: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
