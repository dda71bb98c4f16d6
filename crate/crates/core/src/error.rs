use thiserror::Error;

use crate::domain::Estimand;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{estimand} is not identifiable under {} design", design.replace('_', "-"))]
    NotIdentifiable {
        estimand: Estimand,
        design: &'static str,
    },

    #[error("Newton iteration did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("separation detected at iteration {iteration}: |coefficient {index}| = {value} exceeds the bound")]
    SeparationDetected {
        iteration: usize,
        index: usize,
        value: f64,
    },

    #[error("design matrix is rank deficient ({context})")]
    RankDeficient { context: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dataset has no sampled non-randomized rows")]
    NoExternalRows,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical fitting routines.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SeparationDetected { .. }
                | Error::RankDeficient { .. }
                | Error::InsufficientData(_)
        )
    }
}
