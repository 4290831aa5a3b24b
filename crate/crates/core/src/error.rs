use thiserror::Error;

use crate::cumulant::GaussTrajectory;
use crate::exact::ExactRun;
use crate::meanfield::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Whatever an integration produced before it stopped.
#[derive(Debug, Clone)]
pub enum Partial {
    MeanField(Trajectory),
    Gaussian(GaussTrajectory),
    Exact(ExactRun),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("integration failed at Jt = {t_reached}: {reason}")]
    Integration {
        reason: String,
        t_reached: f64,
        partial: Box<Partial>,
    },

    #[error("fit failed: {reason} (iterations = {iterations}, residual = {residual})")]
    Fit {
        reason: String,
        iterations: usize,
        residual: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
