use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: expected rank {expected}, found rank {found}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("{op}: no valid pixels")]
    EmptyValidSet { op: &'static str },
    #[error("fuse_patches: pixel ({row}, {col}) is not covered by any patch")]
    UncoveredPixel { row: usize, col: usize },
    #[error("synthetic scene: could not place prism {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("unknown gradient check op `{0}`")]
    UnknownOp(String),
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },
    #[error("simplify: ring degenerated to {vertices} distinct vertices")]
    DegeneratePolygon { vertices: usize },
    #[error("extrude_lod1: polygon for component {component} covers no pixels")]
    EmptyComponent { component: u32 },
    #[error("{what} violates an invariant: {reason}")]
    Invariant { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
