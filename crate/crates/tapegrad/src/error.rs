use thiserror::Error;

/// Errors surfaced by graph construction and backward passes.
///
/// Shape problems always name the offending operation and both shapes so a
/// failure deep inside a model forward is diagnosable from the message alone.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}
