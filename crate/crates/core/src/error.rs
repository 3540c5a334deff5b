use thiserror::Error;

use crate::frames::Frame;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("graph is not connected")]
    Disconnected,

    #[error("frame mismatch: cannot apply {lhs_from:?}->{lhs_to:?} after {rhs_from:?}->{rhs_to:?}")]
    FrameMismatch {
        lhs_from: Frame,
        lhs_to: Frame,
        rhs_from: Frame,
        rhs_to: Frame,
    },

    #[error("amplitude error barrier violated: r={r} outside ({lower}, {upper})")]
    Barrier { r: f64, lower: f64, upper: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical abort at t={t} s: {reason}")]
    NumericalAbort { t: f64, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
