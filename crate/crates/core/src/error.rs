use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("path explosion at observation {index}")]
    PathExplosion { index: usize },

    #[error("non-equispaced times at row {row}")]
    NonEquispaced { row: usize },

    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("too few observations: {n} (need at least {min})")]
    TooShort { n: usize, min: usize },

    #[error("zero power variation (constant or affine path)")]
    ZeroPowerVariation,

    #[error("local identifiability failure: condition number {cond:e}")]
    Identifiability { cond: f64 },

    #[error("no solver start produced a finite objective")]
    SolverFailed,

    #[error("optimum on the boundary of the parameter domain")]
    BoundaryOptimum,

    #[error("step-size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("too few records: {n} (need at least {min})")]
    TooFewRecords { n: usize, min: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }

    /// Process exit code: 1 validation, 2 estimation, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::ZeroPowerVariation
            | Error::Identifiability { .. }
            | Error::SolverFailed
            | Error::BoundaryOptimum
            | Error::PathExplosion { .. }
            | Error::StepUnderflow { .. } => 2,
            _ => 1,
        }
    }
}
