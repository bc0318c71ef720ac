//! Thin wrapper over `spade` exposing index-based 2D Delaunay connectivity.

use spade::handles::FixedVertexHandle;
use spade::{DelaunayTriangulation, Triangulation};

use super::{GeomError, Point2};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delaunay {
    /// Counter-clockwise triangles as indices into the input points.
    pub triangles: Vec<[usize; 3]>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
}

/// Triangulates distinct points. Collinear input yields edges but no triangles.
pub fn delaunay(points: &[Point2<f64>]) -> Result<Delaunay, GeomError> {
    let verts: Vec<spade::Point2<f64>> = points.iter().map(|p| spade::Point2::new(p.x, p.y)).collect();
    let dt = DelaunayTriangulation::<spade::Point2<f64>>::bulk_load_stable(verts)
        .map_err(|e| GeomError::DegenerateInput(format!("triangulation: {e}")))?;
    if dt.num_vertices() != points.len() {
        return Err(GeomError::DegenerateInput("duplicate points in triangulation input".into()));
    }
    let idx = |h: FixedVertexHandle| h.index();
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [idx(a.fix()), idx(b.fix()), idx(c.fix())]
        })
        .collect();
    triangles.sort_unstable();
    let mut edges: Vec<(usize, usize)> = dt
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices();
            let (a, b) = (idx(a.fix()), idx(b.fix()));
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    Ok(Delaunay { triangles, edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_two_triangles() {
        let p = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.0, 1.0)];
        let d = delaunay(&p).unwrap();
        assert_eq!(d.triangles.len(), 2);
        assert_eq!(d.edges.len(), 5);
        for t in &d.triangles {
            let (a, b, c) = (p[t[0]], p[t[1]], p[t[2]]);
            assert!((b - a).cross(c - a) > 0.0);
        }
    }

    #[test]
    fn collinear_gives_chain() {
        let p: Vec<_> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        let d = delaunay(&p).unwrap();
        assert!(d.triangles.is_empty());
        assert_eq!(d.edges, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }
}
