use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("zero vector: cosine and normalization are undefined")]
    ZeroVector,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("degenerate CLS row at layer {layer}, head {head}: patch mass below 1e-12")]
    DegenerateRow { layer: usize, head: usize },

    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),

    #[error("bundle has no samples")]
    EmptyBundle,

    #[error("manifest.json missing in {}", .0.display())]
    ManifestMissing(PathBuf),

    #[error("malformed manifest {}: {msg}", path.display())]
    ManifestParse { path: PathBuf, msg: String },

    #[error("checksum mismatch for {file}: manifest says {expected:08x}, file has {found:08x}")]
    ChecksumMismatch {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("malformed npy data: {0}")]
    Npy(String),

    #[error("no attribution stored for sample {sample}, class {class}")]
    AttributionUnavailable { sample: usize, class: usize },

    #[error("sample order mismatch between bundles: {0}")]
    SampleOrderMismatch(String),

    #[error("bundle carries no images")]
    MissingImages,

    #[error("jigsaw grid {grid} does not divide image of {rows}x{cols}")]
    GridMismatch { grid: usize, rows: usize, cols: usize },

    #[error("t-SNE needs at least 4 points, got {0}")]
    TooFewPoints(usize),

    #[error("no scoring model available: {0}")]
    MissingModel(String),

    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// Wraps the error with a human-readable context prefix.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
