use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("missing layer file {0}")]
    MissingLayerFile(PathBuf),

    #[error("{file}: expected {expected} bytes, found {actual}")]
    LayerSize {
        file: String,
        expected: u64,
        actual: u64,
    },

    #[error("{file}: checksum mismatch (manifest {expected}, computed {actual})")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in layer {layer}, row {row}, column {col}")]
    NonFinite {
        layer: usize,
        row: usize,
        col: usize,
    },

    #[error("invalid annotations: {0}")]
    Annotation(String),

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("cell {0} has zero total count")]
    ZeroTotal(String),

    #[error("labels without cells: {0:?}")]
    EmptyLabels(Vec<String>),

    #[error(
        "no gene has a positive count in every label; median-of-ratios is undefined \
         (use a pseudocount mode or widen the label set)"
    )]
    NoCommonGene,

    #[error("node {0} is isolated (zero kernel row sum)")]
    IsolatedNode(usize),

    #[error("graph is disconnected ({0} components); diffusion pseudotime is undefined")]
    Disconnected(usize),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("label alignment failed: {0}")]
    Alignment(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape(_) => "E_SHAPE",
            Error::Io { .. } => "E_IO",
            Error::Manifest(_) => "E_MANIFEST",
            Error::MissingLayerFile(_) => "E_MISSING_LAYER",
            Error::LayerSize { .. } => "E_LAYER_SIZE",
            Error::Checksum { .. } => "E_CHECKSUM",
            Error::NonFinite { .. } => "E_NON_FINITE",
            Error::Annotation(_) => "E_ANNOTATION",
            Error::Parse { .. } => "E_PARSE",
            Error::Parameter(_) => "E_PARAMETER",
            Error::EmptyResult(_) => "E_EMPTY",
            Error::ZeroTotal(_) => "E_ZERO_TOTAL",
            Error::EmptyLabels(_) => "E_EMPTY_LABEL",
            Error::NoCommonGene => "E_NO_COMMON_GENE",
            Error::IsolatedNode(_) => "E_ISOLATED",
            Error::Disconnected(_) => "E_DISCONNECTED",
            Error::DegenerateSpectrum(_) => "E_SPECTRUM",
            Error::NoConvergence(_) => "E_NO_CONVERGENCE",
            Error::Config(_) => "E_CONFIG",
            Error::UndefinedCorrelation(_) => "E_UNDEFINED_CORR",
            Error::Alignment(_) => "E_ALIGNMENT",
        }
    }

    /// True for failures in the inputs themselves (as opposed to failures of
    /// a computation over valid inputs).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Io { .. }
                | Error::Manifest(_)
                | Error::MissingLayerFile(_)
                | Error::LayerSize { .. }
                | Error::Checksum { .. }
                | Error::NonFinite { .. }
                | Error::Annotation(_)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Alignment(_)
        )
    }
}
