use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum HifmError {
    /// Inputs violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A computation produced a non-finite value or failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The input lies outside the domain of an energy (e.g. coincident particles).
    #[error("domain error: {0}")]
    Domain(String),

    /// The Hessian has a negative eigenvalue beyond tolerance.
    #[error("not a minimum: eigenvalue {value:e} at index {index} is below -{threshold:e}")]
    NotAMinimum {
        index: usize,
        value: f64,
        threshold: f64,
    },

    /// The spectrum has no nonzero eigenvalue.
    #[error("degenerate spectrum: all eigenvalues are classified as zero")]
    DegenerateSpectrum,

    /// Adaptive integration failed; carries the last accepted state.
    #[error("integration error at t = {t}: {message}")]
    Integration {
        message: String,
        t: f64,
        last_state: Vec<f64>,
    },

    /// Malformed model, dataset or config file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HifmError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HifmError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(HifmError::Validation(format!(
            "{what} has a non-finite entry at index {i}"
        )));
    }
    Ok(())
}
