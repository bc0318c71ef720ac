//! Geometric kernel shared by the whole pipeline, generic over the scalar type.

mod clip;
mod delaunay;
mod eigen;
mod mesh;
mod plane;
mod point;
mod polygon;
mod scalar;

pub use delaunay::{delaunay, Delaunay};
pub use clip::{clip_polygon_by_halfplane, clip_ring_by_line, Keep};
pub use eigen::symmetric_eigen3;
pub use mesh::{box_mesh, edge_key, newell_normal, polygon3_area, SurfaceMesh};
pub use plane::{fit_plane, intersect_three_planes, intersect_two_planes, Plane};
pub use point::{point_segment_distance, Point2, Point3, Vector2, Vector3};
pub use polygon::{clean_ring, point_in_polygon, ring_is_simple, ring_signed_area, segments_intersect, Location, Polygon2};
pub use scalar::{Scalar, MIN_POLYGON_AREA, SNAP_TOLERANCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("edge {edge:?} has {count} incident faces (expected 2)")]
    NonManifold { edge: (usize, usize), count: usize },
}
