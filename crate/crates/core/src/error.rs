use thiserror::Error;

/// Errors raised by the library. Audit failures (constant violations,
/// inclusion excess) are reported as data, not through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point cloud must be non-empty")]
    EmptyCloud,

    #[error("non-finite coordinate in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weights are not a point of the simplex: {0}")]
    NotSimplex(String),

    #[error("minimum-norm-point iteration did not converge after {iterations} steps (best distance {best})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("member {index} of family `{label}` returned a non-finite value")]
    NonFiniteMember { label: String, index: usize },

    #[error("member index {index} out of range for M = {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("enumeration of {requested} points exceeds the cap of {cap}; use pruned evolution (evolve_reach with prune_cell > 0) instead")]
    EnumerationCap { requested: u128, cap: usize },

    #[error("cloud grew to {size} points at step {step}, above the cap of {cap}; use a larger prune_cell")]
    CloudCap { size: usize, step: usize, cap: usize },

    #[error("hypothesis M >= d + 1 violated (M = {m}, d = {d})")]
    TooFewMembers { m: usize, d: usize },

    #[error("unknown benchmark `{name}`; available: {available}")]
    UnknownBenchmark { name: String, available: String },

    #[error("malformed problem config: {0}")]
    Config(String),

    #[error("nothing to report")]
    NothingToReport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
