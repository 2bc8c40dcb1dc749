use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },
    #[error("diffusion matrix is not elliptic at observation {index}")]
    Ellipticity { index: usize },
    #[error("mixture truncation: {0}")]
    Truncation(String),
    #[error("quadrature did not converge: relative change {relative_change:e}")]
    Accuracy { relative_change: f64 },
    #[error("density underflow at observation {index}")]
    Numeric { index: usize },
    #[error("score has no root in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
}

impl Error {
    /// Validation and parameter errors map to exit code 1; numeric failures to 2.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SimulationDiverged { .. }
                | Error::Ellipticity { .. }
                | Error::Truncation(_)
                | Error::Accuracy { .. }
                | Error::Numeric { .. }
                | Error::NoRoot { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
