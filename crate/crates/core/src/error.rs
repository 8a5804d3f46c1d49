use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("k = {k} exceeds cloud size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("query index {index} out of range for cloud of {size} points")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("too few points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("weighted system is rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("projected points are collinear")]
    DegenerateHull,
    #[error("patch covariance has rank < 2")]
    DegeneratePatch,
    #[error("rough normal plus residual is (nearly) zero")]
    DegenerateSum,
    #[error("vectors are antipodal")]
    Antipodal,
    #[error("negative loss component: {0}")]
    NegativeLoss(&'static str),
    #[error("empty error list")]
    EmptyList,
    #[error("rejection sampling gave up after {0} attempts")]
    SamplingFailed(usize),
    #[error("all errors are below the noise floor (exact fit)")]
    ExactFit,
    #[error("line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
