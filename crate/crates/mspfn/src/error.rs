use std::path::PathBuf;

/// Crate-wide error type. Variants are deliberately specific so callers (and
/// the CLI) can report what actually went wrong without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 4],
        rhs: [usize; 4],
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("parameter {0:?} not found in store")]
    MissingParam(String),

    #[error("parameter {0:?} has no gradient (was backward run?)")]
    MissingGrad(String),

    #[error("backward: loss must be a scalar [1,1,1,1], got {0:?}")]
    NonScalarLoss([usize; 4]),

    #[error("backward: loss tensor was not produced on this tape")]
    LossNotOnTape,

    #[error("non-finite loss at step {step} (l_con={l_con}, l_edge={l_edge}, lr={lr})")]
    NonFiniteLoss {
        step: u64,
        l_con: f64,
        l_edge: f64,
        lr: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    ImageFormat { path: PathBuf, msg: String },

    #[error("checkpoint {path}: bad magic (not a checkpoint file)")]
    CheckpointMagic { path: PathBuf },

    #[error("checkpoint {path}: unsupported format version {found} (supported: {supported})")]
    CheckpointVersion {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("checkpoint {path}: file truncated ({msg})")]
    CheckpointTruncated { path: PathBuf, msg: String },

    #[error("checkpoint {path}: payload checksum mismatch (file corrupted)")]
    CheckpointChecksum { path: PathBuf },

    #[error("checkpoint {path}: malformed header: {msg}")]
    CheckpointHeader { path: PathBuf, msg: String },

    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("unknown variant {0:?} (try `mspfn inspect --list`)")]
    UnknownVariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
