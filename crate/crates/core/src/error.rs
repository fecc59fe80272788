use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("point is behind the camera (z = {depth})")]
    BehindCamera { depth: f64 },

    #[error("scene graph needs at least 2 cameras, got {0}")]
    TooFewCameras(usize),

    #[error("depth map has no valid pixels")]
    EmptyDepth,

    #[error("mesh has no silhouette edges")]
    NoSilhouette,

    #[error("silhouette vertex {0} coincides with the camera center")]
    ZeroLengthRay(usize),

    #[error("viewport has zero area ({width}x{height})")]
    EmptyViewport { width: usize, height: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("view {index}: {what}")]
    MissingGeometry { index: usize, what: &'static str },

    #[error("fusion bundle is empty")]
    EmptyBundle,

    #[error("invalid fusion bundle: {0}")]
    InvalidBundle(String),

    #[error("subset size {m} out of range 1..={n}")]
    SubsetSize { m: usize, n: usize },

    #[error("view index {index} out of range (N = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate convex hull after {0} attempts")]
    DegenerateHull(usize),

    #[error("geometry estimation failed for views {views:?}: {message}")]
    Estimator { views: Vec<usize>, message: String },

    #[error("denoiser failed for view {view}: {message}")]
    Denoiser { view: usize, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{what}: file not found ({})", .path.display())]
    NotFound { what: String, path: PathBuf },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::NotFound { .. }
            | Error::Format { .. }
            | Error::Json(_)
            | Error::Config(_)
            | Error::InvalidCamera(_)
            | Error::SubsetSize { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DimensionMismatch(_)
            | Error::MissingGeometry { .. } => true,
            _ => false,
        }
    }
}
