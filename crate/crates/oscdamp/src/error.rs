use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Fock truncation too small: {reason}; need dim >= {required}")]
    Truncation { required: usize, reason: String },
    #[error("not a density matrix: {0}")]
    InvalidState(String),
    #[error("measurement outcome has vanishing probability: {0}")]
    ImpossibleOutcome(String),
    #[error("state norm underflowed during conditional propagation: {0}")]
    Underflow(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}
