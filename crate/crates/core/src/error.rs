use thiserror::Error;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Schema,
    Numerical,
    Parameter,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Schema => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Parameter => 4,
            ErrorKind::Io => 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate key: team_id {team_id} appears twice for season {season:?}")]
    DuplicateKey { team_id: u32, season: String },

    #[error("invalid record at row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate degree: vertex {vertex} has degree {degree:e}")]
    DegenerateDegree { vertex: usize, degree: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("unsplittable: {reason}")]
    Unsplittable {
        reason: String,
        /// Splits committed before the failure, as `(cluster, size_a, size_b)`.
        partial_trace: Vec<(usize, usize, usize)>,
    },

    #[error("undefined index: {0}")]
    UndefinedIndex(&'static str),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(&'static str),

    #[error("no signal: every corrected importance is non-positive")]
    NoSignal,

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingColumn(_)
            | Error::Schema(_)
            | Error::Parse { .. }
            | Error::DuplicateKey { .. }
            | Error::InvalidRecord { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Schema,
            Error::EmptyInput(_) | Error::Parameter(_) => ErrorKind::Parameter,
            Error::DegenerateSample(_)
            | Error::DegenerateDegree { .. }
            | Error::NoConvergence { .. }
            | Error::Unsplittable { .. }
            | Error::UndefinedIndex(_)
            | Error::DegenerateClustering(_)
            | Error::NoSignal => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
