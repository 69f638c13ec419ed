use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("field norm {0:e} is too small to normalize")]
    ZeroNorm(f64),
    #[error("basis does not match grid: {0}")]
    BasisMismatch(String),
    #[error("split-step propagation requires periodic axes (axis {axis} is a box)")]
    BoundaryUnsupported { axis: usize },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("pointer packet for branch {branch} leaves the pointer grid")]
    PointerOverflow { branch: usize },
    #[error("time {t} is outside the validity window of the evolution ({reason})")]
    OutsideWindow { t: f64, reason: &'static str },
    #[error("operation not supported by this evolution engine: {0}")]
    Unsupported(&'static str),
    #[error("configuration is within the node threshold (|psi|^2 = {density:e}, threshold {threshold:e})")]
    NodeProximity { density: f64, threshold: f64 },
    #[error("trajectory stuck at a node near t = {t} after {count} consecutive safeguard steps")]
    StuckAtNode { t: f64, count: usize },
    #[error("step budget of {steps} exhausted near t = {t}")]
    StepBudget { t: f64, steps: usize },
    #[error("invalid trajectory request: {0}")]
    InvalidTrajectory(String),
    #[error("density is not a probability density: {0}")]
    BadDensity(String),
    #[error("coarse-grained P is positive in cell {cell} where the reference density vanishes")]
    SupportMismatch { cell: usize },
    #[error("branch windows {0} and {1} overlap")]
    OverlapError(usize, usize),
    #[error("branches are not separated: separation {separation} <= required {required}")]
    BranchOverlap { separation: f64, required: f64 },
    #[error("pointer width {width} is too coarse for resolution {resolution} at a*tau = {a_tau}")]
    ResolutionTooCoarse { width: f64, resolution: f64, a_tau: f64 },
    #[error("packets are not disjoint: separation {separation} <= required {required}")]
    PacketOverlap { separation: f64, required: f64 },
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("{path}: not a PWF1 snapshot")]
    MagicMismatch { path: PathBuf },
    #[error("{path}: truncated snapshot (expected {expected} bytes, found {found})")]
    TruncatedFile { path: PathBuf, expected: u64, found: u64 },
    #[error("{path}: unsupported snapshot version {version}")]
    VersionUnsupported { path: PathBuf, version: u32 },
    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }
}
