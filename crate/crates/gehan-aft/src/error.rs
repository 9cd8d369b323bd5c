use thiserror::Error;

/// Errors surfaced while ingesting data, fitting, or evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: time must be positive, got {value}")]
    NonpositiveTime { row: usize, value: f64 },
    #[error("row {row}, column `{column}`: category `{value}` is not in the declared vocabulary")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },
    #[error("column `{0}` has zero variance on the fitting split")]
    ZeroVariance(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("censoring calibration failed: {0}")]
    CensorCalibration(String),
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::MissingColumn(_)
            | Error::UnparsableCell { .. }
            | Error::NonpositiveTime { .. }
            | Error::UnknownCategory { .. }
            | Error::ZeroVariance(_)
            | Error::EmptyInput(_)
            | Error::LengthMismatch(_)
            | Error::SchemaMismatch(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::NonFinite(_)
            | Error::CensorCalibration(_)
            | Error::NoComparablePairs
            | Error::Diverged(_)
            | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
