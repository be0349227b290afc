//! Error type shared by every module.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, Serialize)]
#[serde(tag = "error", content = "detail")]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("grazing contact with boundary {boundary} at t = {time} (n.F = {normal_velocity:e})")]
    GrazingError {
        boundary: usize,
        time: f64,
        normal_velocity: f64,
    },

    #[error("state drifted off the admissible domain at t = {time} (violation {violation:e})")]
    DriftError { time: f64, violation: f64 },

    #[error("no periodic orbit: {0}")]
    NoCycleError(String),

    #[error("anchor event never occurred: {0}")]
    AnchorError(String),

    #[error("event sequence of the perturbed cycle differs: {0}")]
    TopologyChangeError(String),

    #[error("crossing is not transversal (n.F = {normal_velocity:e})")]
    NonTransversalError { normal_velocity: f64 },

    #[error("monodromy eigenvalue problem failed: {0}")]
    MonodromyError(String),

    #[error("timing regions are inconsistent: {0}")]
    RegionTopologyError(String),

    #[error("oscillators desynchronized: {0}")]
    DesynchronizationError(String),

    #[error("iteration did not converge: {0}")]
    NonConverged(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ContractViolation(msg()))
    }
}
