use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Returned when `gamma_d * dt` is too large for a single update.
    #[error("stability guard violated: gamma_d * dt = {product:.3e} (gamma_d = {gamma_d:.6e} rad/s, dt = {dt:.3e} s) must be < 0.5")]
    StabilityGuard { gamma_d: f64, dt: f64, product: f64 },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },

    #[error("the measurement record carries no information when eta = 0")]
    NoInformation,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("integration window [{start:.6e}, {end:.6e}] s is empty or outside the record")]
    BadWindow { start: f64, end: f64 },

    #[error("detector separation must be positive and finite, got {0}")]
    ZeroSeparation(f64),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("trajectories do not share a common time grid")]
    GridMismatch,

    #[error("operation requires the Zeno regime (gamma_d >= 2|omega|)")]
    NotZenoRegime,

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("bad file magic")]
    BadMagic,

    #[error("unsupported schema version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error("checksum mismatch")]
    Checksum,

    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
