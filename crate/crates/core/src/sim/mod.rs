//! Synthetic event generation and paired ground-truth labels.

pub mod frames;
pub mod heatmap;
pub mod labels;
pub mod pixel;

use thiserror::Error;

pub use frames::{composite, interpolate_linear, FrameSequence, MaskSequence};
pub use heatmap::{make_heatmaps, DEFAULT_RESOLUTION, DEFAULT_SIGMA_CELLS};
pub use labels::{
    nearest_label, normalize_labels, project_skeleton, CameraModel, CoordinateFrame, CubeMapping,
    JointSet, NormalizedLabels, SkeletonFrame,
};
pub use pixel::{frames_to_events, PixelModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("frame sequence needs at least two frames")]
    EmptySequence,
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("fps mismatch: {0}")]
    FpsMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("io: {0}")]
    Io(String),
    #[error("internal: {0}")]
    Internal(String),
}
