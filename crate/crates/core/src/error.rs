use thiserror::Error;

use crate::memory_sim::SweepTable;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("frequency grid too narrow: span {span:.4e} rad/s is less than {min_ratio}x the spectral FWHM {fwhm:.4e} rad/s")]
    Truncation {
        span: f64,
        fwhm: f64,
        min_ratio: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable discretization at step {step}: atomic norm grew by {growth:.4}")]
    Unstable { step: usize, growth: f64 },

    #[error("no half-maximum crossing found: {0}")]
    NoFwhm(String),

    #[error("fit did not converge after {iterations} iterations (cost {cost:.4e})")]
    NotConverged {
        iterations: usize,
        cost: f64,
        best: Vec<f64>,
    },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("sweep aborted at xi = {xi}: {source}")]
    SweepAborted {
        xi: f64,
        partial: Box<SweepTable>,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {v}")))
    }
}

pub(crate) fn ensure_nonneg(name: &'static str, v: f64) -> Result<()> {
    ensure_finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be >= 0, got {v}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, v: f64) -> Result<()> {
    ensure_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {v}")))
    }
}
