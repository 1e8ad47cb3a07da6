//! Shared error type for the scene compiler and diffusion lab.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsoError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty scene domain")]
    EmptySceneDomain,
    #[error("scene not covered by camera frustum")]
    SceneNotCovered,
    #[error("empty supervision region")]
    EmptySupervisionRegion,
    #[error("degenerate schedule step: alpha_bar = {0}")]
    DegenerateScheduleStep(f64),
    #[error("time step {t} out of range [0, {limit})")]
    TimeStepOutOfRange { t: usize, limit: usize },
    #[error("degenerate bin {0}: no samples")]
    DegenerateBin(usize),
    #[error("no background context: mask covers entire frame")]
    NoBackgroundContext,
    #[error("empty instance mask")]
    EmptyMask,
    #[error("degenerate bounding box")]
    DegenerateBbox,
    #[error("inconsistent extrusion: mask extends below footprint base")]
    InconsistentExtrusion,
    #[error("unmapped semantic label: {0}")]
    UnmappedLabel(String),
    #[error("region has empty boundary")]
    EmptyRegionBoundary,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("missing texture tile for category {0}")]
    MissingTile(String),
    #[error("heightmap grid must be at least 2x2")]
    GridTooSmall,
    #[error("mesh self-check failed: {0}")]
    MeshCheck(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<IsoError>,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, IsoError>;
