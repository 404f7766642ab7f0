use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to project onto the sphere")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unit vectors need at least 2 components, found {0}")]
    DimTooSmall(usize),
    #[error("points are parallel (angle {angle:e} rad), geodesic is degenerate")]
    DegenerateParallel { angle: f64 },
    #[error("points are antipodal (angle {angle} rad), geodesic is not unique")]
    AntipodalPoints { angle: f64 },
    #[error("tangent vector is attached to a different base point")]
    TangentBaseMismatch,

    #[error("need at least {needed} points, got {available}")]
    TooFewPoints { needed: usize, available: usize },
    #[error("cannot average an empty cluster")]
    EmptyCluster,
    #[error("a point is antipodal to the running mean estimate")]
    AntipodalConfiguration,

    #[error("prototype set is empty")]
    EmptyPrototypeSet,
    #[error("only one prototype exists and it is the anchor's own")]
    SinglePrototype,
    #[error("anchor is equidistant from both prototypes (denominator {denominator:e})")]
    EquidistantAnchor { denominator: f64 },
    #[error("anchor is closer to the selected prototype than to its own")]
    AnchorNotClosest,
    #[error("no feasible point on the path, the constraint fails at t = 0")]
    NoFeasiblePoint,
    #[error("index {index} out of range for {len} prototypes")]
    PrototypeIndex { index: usize, len: usize },

    #[error("empty batch")]
    EmptyBatch,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("batch of {batch} exceeds queue capacity {capacity}")]
    BatchTooLarge { batch: usize, capacity: usize },
    #[error("requested {requested} elements but queue holds {filled}")]
    NotEnoughElements { requested: usize, filled: usize },

    #[error("forward cache does not match this encoder or gradient batch")]
    CacheMismatch,
    #[error("parameter shapes do not match")]
    ShapeMismatch,
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("bad magic bytes, not an embedding file")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("{0} unexpected bytes after payload")]
    TrailingData(u64),
    #[error("row {0} is a zero vector")]
    ZeroRow(usize),
    #[error("malformed labels file at line {line}: {reason}")]
    BadLabels { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config document: {0}")]
    ConfigParse(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for the geometric degeneracies that make a single anchor unusable
    /// without invalidating the rest of a batch.
    pub fn is_degenerate_geometry(&self) -> bool {
        matches!(
            self,
            Error::EquidistantAnchor { .. }
                | Error::DegenerateParallel { .. }
                | Error::AntipodalPoints { .. }
        )
    }
}
