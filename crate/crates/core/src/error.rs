use thiserror::Error;

/// Failures raised anywhere in the measurement pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at index {index}")]
    InvalidSample { index: usize },

    #[error("normalization drift {drift:.3e} exceeds {limit:.1e} (under-resolved grid?)")]
    NormalizationError { drift: f64, limit: f64 },

    #[error("maximum attained at scan boundary {location} (widen the scan window)")]
    BoundaryMaximum { location: f64 },

    #[error("truncation removes {fraction:.3} of the Gaussian mass")]
    ExcessTruncation { fraction: f64 },

    #[error("state has zero norm")]
    DegenerateState,

    #[error("window captures {captured:.9} of the mass, need at least {required:.9}")]
    WindowTooSmall { captured: f64, required: f64 },

    #[error("out-of-band leakage {leakage:.3e} exceeds cap {cap:.3e}{}", outcome.map(|o| format!(" at outcome {o}")).unwrap_or_default())]
    BandLimitViolation {
        leakage: f64,
        cap: f64,
        outcome: Option<f64>,
    },

    #[error("interval ({a}, {b}) outside grid span [{lo}, {hi}]")]
    OutOfRange { a: f64, b: f64, lo: f64, hi: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("tail mass {tail_mass:.3e} outside the grid")]
    TailTruncation { tail_mass: f64 },

    #[error("every outcome weight is below the floor")]
    DegenerateMeasurement,

    #[error("orders alpha={alpha}, gamma={gamma} violate 1/alpha + 1/gamma = 2")]
    ConjugacyError { alpha: f64, gamma: f64 },

    #[error("configuration error: {0}")]
    ConfigError(String),

    #[error("grids do not match: {0}")]
    MismatchedGrids(String),

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable tag used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidSample { .. } => "InvalidSample",
            Error::NormalizationError { .. } => "NormalizationError",
            Error::BoundaryMaximum { .. } => "BoundaryMaximum",
            Error::ExcessTruncation { .. } => "ExcessTruncation",
            Error::DegenerateState => "DegenerateState",
            Error::WindowTooSmall { .. } => "WindowTooSmall",
            Error::BandLimitViolation { .. } => "BandLimitViolation",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::DomainError(_) => "DomainError",
            Error::TailTruncation { .. } => "TailTruncation",
            Error::DegenerateMeasurement => "DegenerateMeasurement",
            Error::ConjugacyError { .. } => "ConjugacyError",
            Error::ConfigError(_) => "ConfigError",
            Error::MismatchedGrids(_) => "MismatchedGrids",
            Error::Io(_) => "Io",
        }
    }
}
