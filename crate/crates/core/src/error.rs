use std::path::PathBuf;

use crate::geom::GeomError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geom(#[from] GeomError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid geometry in feature {feature}: {message}")]
    InvalidGeometry { feature: String, message: String },

    #[error("point cloud has no instance labels")]
    MissingLabels,

    #[error("too few points: {0}")]
    TooFewPoints(String),

    #[error("too few contour pixels: {0}")]
    TooFewPixels(usize),

    #[error("outer wall traces do not close a boundary")]
    OpenBoundary,

    #[error("no roof planes")]
    NoRoofPlanes,

    #[error("face prior {prior} conflicts with single-roof group {group:?}")]
    InfeasibleByConstruction { prior: usize, group: Vec<usize> },

    #[error("selection problem is infeasible")]
    Infeasible,

    #[error("solver timed out without a feasible assignment")]
    Timeout,

    #[error("selected faces do not form a closed 2-manifold: {0}")]
    NonManifoldResult(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
