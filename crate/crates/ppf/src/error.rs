//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point pair is degenerate (points closer than {eps})")]
    DegeneratePair { eps: f64 },

    #[error("paired point lies on the reference normal axis; rotation angle is undefined")]
    PointOnAxis,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("operation needs normals but the cloud has none")]
    NormalsMissing,

    #[error("cloud has {points} points but {normals} normals")]
    LengthMismatch { points: usize, normals: usize },

    #[error("too few points: got {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("query radius {radius} exceeds grid cell size {cell_size}")]
    RadiusExceedsCell { radius: f64, cell_size: f64 },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image size mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    SizeMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("too few ICP correspondences: {got} (need {need}); poses do not overlap")]
    NoOverlap { got: usize, need: usize },

    #[error("rendered silhouette is empty; pose projects outside the image")]
    EmptySilhouette,

    #[error("corrupt model table at byte {offset}: {reason}")]
    CorruptTable { offset: u64, reason: String },

    #[error("PLY parse error at line {line}: {reason}")]
    PlyParse { line: usize, reason: String },

    #[error("unsupported PLY feature: {0}")]
    PlyUnsupported(String),

    #[error("depth image is not 16-bit grayscale: {0}")]
    DepthFormat(String),

    #[error("missing ground truth for frame {0}")]
    MissingGroundTruth(u32),

    #[error("evaluation produced no frames")]
    NoFrames,

    #[error("unknown config key {key:?}; valid keys: {valid}")]
    UnknownConfigKey { key: String, valid: String },

    #[error("invalid value {value:?} for config key {key:?}: {reason}")]
    BadConfigValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
