use thiserror::Error;

/// Diagnostics attached to [`Error::NoPoseFound`].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct NoPoseDiagnostics {
    /// Largest per-bin hypothesis count seen before pruning.
    pub max_density: usize,
    /// Largest RANSAC consensus over all groups.
    pub max_inliers: usize,
    /// Number of groups that survived pruning.
    pub groups: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth {0} in camera frame")]
    NonPositiveDepth(f64),
    #[error("grid level {0} exceeds the supported maximum of {1}")]
    LevelTooLarge(u32, u32),
    #[error("mesh is degenerate: {0}")]
    DegenerateMesh(String),
    #[error("point lies on the symmetry axis (distance {0})")]
    OnAxisPoint(f64),
    #[error("observation mask is empty")]
    EmptyMask,
    #[error("object projects outside the image")]
    ObjectOutOfFrame,
    #[error("occluder removed every mask pixel")]
    EmptyMaskAfterOcclusion,
    #[error("pixel ({0}, {1}) is not on the mask")]
    PixelOffMask(u32, u32),
    #[error("3D points are collinear")]
    CollinearPoints,
    #[error("P3P has no real solution")]
    NoRealSolution,
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("no model point is visible under the pose")]
    NoVisiblePoints,
    #[error("no pose survived estimation (max density {}, max inliers {}, groups {})", .0.max_density, .0.max_inliers, .0.groups)]
    NoPoseFound(NoPoseDiagnostics),
    #[error("ground-truth pose set is empty")]
    EmptyGt,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
