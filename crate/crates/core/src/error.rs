use thiserror::Error;

/// Errors produced by the geometry, solver, estimation and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("redistortion has no real root (1 - 4*lambda*r^2 = {discriminant:.3e})")]
    NoRealRoot { discriminant: f64 },

    #[error("homography cannot be normalized: |h33| = {0:.3e}")]
    NormalizationFailure(f64),

    #[error("translation direction undefined: |t| = {0:.3e}")]
    ZeroTranslation(f64),

    #[error("polynomial has no nonzero coefficients")]
    DegenerateInput,

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("no admissible solution")]
    NoSolution,

    #[error("elimination failed: pivot {pivot:.3e} relative to row norm")]
    EliminationFailure { pivot: f64 },

    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no hypothesis produced a model")]
    NoModelFound,

    #[error("scene generation failed after {0} attempts")]
    GenerationFailure(usize),

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `row` is the 1-based file line, 0 when the problem is not tied to one.
    #[error("parse error at line {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short stable category name, used for machine-readable CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::NoRealRoot { .. } => "no_real_root",
            Error::NormalizationFailure(_) => "normalization_failure",
            Error::ZeroTranslation(_) => "zero_translation",
            Error::DegenerateInput => "degenerate_input",
            Error::DegenerateConfiguration(_) => "degenerate_configuration",
            Error::NoSolution => "no_solution",
            Error::EliminationFailure { .. } => "elimination_failure",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::NoModelFound => "no_model_found",
            Error::GenerationFailure(_) => "generation_failure",
            Error::InvalidRotation(_) => "invalid_rotation",
            Error::InvalidIntrinsics(_) => "invalid_intrinsics",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse_error",
            Error::Io(_) => "io_error",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Parse {
            row,
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
