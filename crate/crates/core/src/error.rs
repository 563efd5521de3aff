use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("root refinement for J_{n}, root #{k} did not converge")]
    RootNotConverged { n: usize, k: usize },

    #[error(
        "synthesis matrix is numerically rank deficient (condition number {condition:.3e}); \
         use a smaller band_ratio"
    )]
    RankDeficient { condition: f64 },

    #[error("frequency (n={n}, k={k}) receives no CTF energy across the dataset")]
    DeadFrequency { n: i32, k: u32 },

    #[error("zero denominator in block n={n} at entry ({k}, {k2})")]
    ZeroDenominator { n: usize, k: usize, k2: usize },

    #[error("block n={n} is not Hermitian (relative asymmetry {drift:.3e})")]
    NonHermitian { n: usize, drift: f64 },

    #[error("basis mismatch: expected hash {expected}, found {found}")]
    BasisMismatch { expected: String, found: String },

    #[error("unknown defocus group {0}")]
    UnknownGroup(usize),

    #[error("conjugate gradient diverged at iteration {iteration} (residual {residual:.3e})")]
    Diverged { iteration: usize, residual: f64 },

    #[error("noise power spectral density is not strictly positive")]
    InvalidPsd,

    #[error("unsupported MRC mode {0} (only mode 2 is supported)")]
    UnsupportedMode(i32),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding failed: {0}")]
    Encode(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
