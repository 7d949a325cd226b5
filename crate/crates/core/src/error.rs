use std::path::PathBuf;

/// Errors raised anywhere in the phase-identification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("degenerate series for meter {meter_id}: mean is {mean}")]
    DegenerateSeries { meter_id: String, mean: f64 },

    #[error("size error: {0}")]
    Size(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("compressed spectrum has no retained harmonics")]
    EmptyFeatures,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no complete meters remain for feeder {feeder_id}")]
    NoCompleteMeters { feeder_id: String },
}

/// Coarse error category, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Mask(_) => ErrorKind::Usage,
            Error::Numeric(_)
            | Error::DegenerateSeries { .. }
            | Error::Matrix(_)
            | Error::EmptyFeatures => ErrorKind::Numeric,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Topology(_)
            | Error::Size(_)
            | Error::Alignment(_)
            | Error::NoCompleteMeters { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
