//! Reconstruction of compact, watertight building models from airborne point clouds.

pub mod error;
pub mod evaluate;
pub mod geom;
pub mod hypothesize;
pub mod pipeline;
pub mod ingest;
pub mod plane_detect;
pub mod select;
pub mod synthkit;
pub mod wall_infer;

pub use error::{Error, Result};

pub use geom::Scalar;

pub type Point2 = geom::Point2<f64>;
pub type Point3 = geom::Point3<f64>;
pub type Vector2 = geom::Vector2<f64>;
pub type Vector3 = geom::Vector3<f64>;
pub type Plane = geom::Plane<f64>;
pub type Polygon2 = geom::Polygon2<f64>;
pub type SurfaceMesh = geom::SurfaceMesh<f64>;
