use alloc::string::String;
use alloc::vec::Vec;

use crate::fit::HistoryRecord;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("point culled: depth {depth} is below the near plane {near}")]
    Culled { depth: f64, near: f64 },
    #[error("degenerate limb {limb}: endpoints coincide")]
    DegenerateLimb { limb: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("optimization diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String, history: Vec<HistoryRecord> },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
