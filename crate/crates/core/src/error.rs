use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("voxel size must be positive, got {0}")]
    NonPositiveVoxel(f64),
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("shape mismatch: {what} ({left} vs {right})")]
    ShapeMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("frame {0} carries no ground-truth global coordinates")]
    MissingGroundTruth(usize),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("feature radii must be positive and strictly increasing")]
    BadRadii,
    #[error("feature row {0} is zero")]
    ZeroFeatureRow(usize),
    #[error("feature dimension mismatch ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("no attention levels given")]
    EmptyLevelList,
    #[error("all {0} attention rows are degenerate")]
    DegenerateRow(usize),
    #[error("no soft correspondences to propagate from")]
    EmptyCorrespondences,
    #[error("neighbor count k={k} outside 1..={max}")]
    BadK { k: usize, max: usize },
    #[error("only {available} correspondences, need at least {required}")]
    InsufficientCorrespondences { available: usize, required: usize },
    #[error("best hypothesis has {inliers} inliers, need at least {required}")]
    NoConsensus { inliers: usize, required: usize },
    #[error("no world point within range of frame {0}")]
    EmptyScan(usize),
    #[error("loss intermediates are only produced in full mode")]
    MissingIntermediates,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub(crate) fn ensure_same_len(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { what, left, right })
    }
}
