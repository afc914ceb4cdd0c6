use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("kernel regression needs at least one sample")]
    EmptySamples,

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("negative sensitivity {value} at line {line}")]
    NegativeSensitivity { line: usize, value: f64 },

    #[error("band {band} integrates to {sum:e} on the target grid")]
    DegenerateBand { band: String, sum: f64 },

    #[error("rank deficient: smallest singular value {smallest:e} vs largest {largest:e}")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("wavelength grid mismatch: {0}")]
    GridMismatch(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("transmittance {value} outside [0, 1] at {wavelength} nm")]
    InvalidTransmittance { wavelength: f64, value: f64 },

    #[error("spectrum has no samples")]
    EmptySpectrum,

    #[error("feasibility residual {residual:e} exceeds tolerance {tolerance:e} at pixel {pixel}")]
    FeasibilityViolation { pixel: usize, residual: f64, tolerance: f64 },

    #[error("no convergence after {iterations} iterations (stationarity {stationarity:e})")]
    NoConvergence { iterations: usize, stationarity: f64 },

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("patch {patch} larger than scene {height}x{width}")]
    PatchTooLarge { patch: usize, height: usize, width: usize },

    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
