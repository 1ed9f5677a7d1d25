use thiserror::Error;

pub type Result<T> = std::result::Result<T, FlexError>;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("grid has {nodes} nodes; at least {min} are required")]
    GridTooSmall { nodes: usize, min: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("curve {curve} has a non-finite sample at node {node}")]
    NonFinite { curve: usize, node: usize },

    #[error("curves do not share one grid")]
    GridMismatch,

    #[error("{what} index {index} out of range (valid: {valid})")]
    IndexOutOfRange { what: &'static str, index: usize, valid: String },

    #[error("{0}")]
    InvalidArgument(String),

    /// A quantity that the analysis divides by vanished (or fell below the
    /// scale-free threshold) at the named node.
    #[error("degenerate configuration at node {node}, curve {curve}: {what} (margin {margin:e})")]
    Degenerate { node: usize, curve: usize, what: String, margin: f64 },

    #[error("degenerate frame on curve {curve} at t = {t}: {what}")]
    DegenerateFrame { curve: usize, t: f64, what: String },

    /// The System A coefficients blow up inside the integration domain.
    #[error("integration horizon reached at node {node} on middle curve {curve} (margin {margin:e})")]
    Horizon { node: usize, curve: usize, margin: f64 },

    #[error("tangents of ribbon {ribbon} are parallel at node {node}; ruling decomposition is not unique")]
    NonUniqueDecomposition { ribbon: usize, node: usize },

    #[error("3-ribbon window starting at curve {first} fails the flexibility test (normalized chi {chi:e} > {tol:e})")]
    RigidTriple { first: usize, chi: f64, tol: f64 },

    #[error("anchor value is not strictly monotone along the trajectory (frame {frame})")]
    DegenerateAnchor { frame: usize },

    #[error("trajectory has {frames} frames; the stencil needs {needed}")]
    TrajectoryTooShort { frames: usize, needed: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("unsupported document format {0}")]
    UnsupportedFormat(u32),

    #[error("malformed mesh at line {line}: {reason}")]
    MeshParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FlexError {
    /// The grid node a geometric failure refers to, when there is one.
    pub fn node(&self) -> Option<usize> {
        match self {
            FlexError::Degenerate { node, .. }
            | FlexError::Horizon { node, .. }
            | FlexError::NonFinite { node, .. }
            | FlexError::NonUniqueDecomposition { node, .. } => Some(*node),
            _ => None,
        }
    }

    pub(crate) fn degenerate(node: usize, curve: usize, what: impl Into<String>, margin: f64) -> Self {
        FlexError::Degenerate { node, curve, what: what.into(), margin }
    }
}
