use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("inverse FFT left an imaginary residue of {residue:e} (limit {limit:e})")]
    NumericalSymmetry { residue: f64, limit: f64 },

    #[error("SVD of Fourier slice {slice} did not converge")]
    SvdFailed { slice: usize },

    #[error("symmetric eigendecomposition did not converge ({context})")]
    EigenFailed { context: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("degenerate graph: row {row} has no positive weight")]
    DegenerateGraph { row: usize },

    #[error("{path}: expected {expected}, found {found}")]
    Shape {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: row {row}, column {col}: cannot parse {cell:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("manifest {path}: field `{field}`: {reason}")]
    Manifest {
        path: PathBuf,
        field: String,
        reason: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
