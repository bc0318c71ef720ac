use serde::{Deserialize, Serialize};

use super::{point_segment_distance, GeomError, Point2, Scalar};

/// Where a point lies relative to a polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// Simple polygon in the ground plane: CCW outer ring, CW holes. Rings are open
/// (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon2<T> {
    outer: Vec<Point2<T>>,
    holes: Vec<Vec<Point2<T>>>,
}

/// Twice the signed area of a ring (positive for CCW).
pub fn ring_signed_area<T: Scalar>(ring: &[Point2<T>]) -> T {
    let n = ring.len();
    let mut s = T::zero();
    for i in 0..n {
        s += ring[i].cross(ring[(i + 1) % n]);
    }
    s / T::lit(2.0)
}

fn sign(a: f64) -> i8 {
    if a > 0.0 {
        1
    } else if a < 0.0 {
        -1
    } else {
        0
    }
}

fn on_segment<T: Scalar>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
pub fn segments_intersect<T: Scalar>(p1: Point2<T>, p2: Point2<T>, q1: Point2<T>, q2: Point2<T>) -> bool {
    let d1 = sign((q2 - q1).cross(p1 - q1).to_f64_lossy());
    let d2 = sign((q2 - q1).cross(p2 - q1).to_f64_lossy());
    let d3 = sign((p2 - p1).cross(q1 - p1).to_f64_lossy());
    let d4 = sign((p2 - p1).cross(q2 - p1).to_f64_lossy());
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(p1, q1, q2))
        || (d2 == 0 && on_segment(p2, q1, q2))
        || (d3 == 0 && on_segment(q1, p1, p2))
        || (d4 == 0 && on_segment(q2, p1, p2))
}

/// True when no two non-adjacent edges of the ring touch.
pub fn ring_is_simple<T: Scalar>(ring: &[Point2<T>]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(a, b, ring[j], ring[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Removes a repeated closing vertex and consecutive duplicates.
pub fn clean_ring<T: Scalar>(ring: &[Point2<T>], tol: T) -> Vec<Point2<T>> {
    let mut out: Vec<Point2<T>> = Vec::with_capacity(ring.len());
    for &p in ring {
        if out.last().map_or(true, |q| q.distance(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].distance(*out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}

impl<T: Scalar> Polygon2<T> {
    /// Validates the rings and re-orients them (outer CCW, holes CW).
    pub fn new(outer: Vec<Point2<T>>, holes: Vec<Vec<Point2<T>>>) -> Result<Self, GeomError> {
        let tol = T::lit(super::SNAP_TOLERANCE);
        let mut outer = clean_ring(&outer, tol);
        if outer.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::InvalidGeometry("non-finite coordinate".into()));
        }
        if !ring_is_simple(&outer) {
            return Err(GeomError::InvalidGeometry("outer ring is not simple".into()));
        }
        if ring_signed_area(&outer) < T::zero() {
            outer.reverse();
        }
        let mut hs = Vec::with_capacity(holes.len());
        for h in holes {
            let mut h = clean_ring(&h, tol);
            if !ring_is_simple(&h) {
                return Err(GeomError::InvalidGeometry("hole ring is not simple".into()));
            }
            if ring_signed_area(&h) > T::zero() {
                h.reverse();
            }
            hs.push(h);
        }
        let poly = Self { outer, holes: hs };
        if !(poly.area() > T::zero()) {
            return Err(GeomError::InvalidGeometry("polygon has no area".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self::new(
            vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)],
            vec![],
        )
        .expect("rectangle with positive extent")
    }

    pub fn outer(&self) -> &[Point2<T>] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point2<T>>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point2<T>]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Directed boundary edges of all rings.
    pub fn edges(&self) -> impl Iterator<Item = (Point2<T>, Point2<T>)> + '_ {
        self.rings().flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
    }

    pub fn area(&self) -> T {
        self.rings().map(ring_signed_area).fold(T::zero(), |a, b| a + b)
    }

    pub fn bounds(&self) -> (Point2<T>, Point2<T>) {
        let mut lo = self.outer[0];
        let mut hi = self.outer[0];
        for p in &self.outer {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    /// Distance from `p` to the nearest boundary edge.
    pub fn boundary_distance(&self, p: Point2<T>) -> T {
        self.edges().map(|(a, b)| point_segment_distance(p, a, b)).fold(T::infinity(), T::min)
    }

    pub fn locate(&self, p: Point2<T>) -> Location {
        point_in_polygon(p, self)
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        self.locate(p) != Location::Outside
    }
}

/// Even-odd classification; points within 1e-9 of an edge are `Boundary`.
pub fn point_in_polygon<T: Scalar>(p: Point2<T>, poly: &Polygon2<T>) -> Location {
    let eps = T::lit(1e-9);
    let mut inside = false;
    for (a, b) in poly.edges() {
        if point_segment_distance(p, a, b) <= eps {
            return Location::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Point2<f64>;

    fn square_with_hole() -> Polygon2<f64> {
        Polygon2::new(
            vec![P::new(0., 0.), P::new(1., 0.), P::new(1., 1.), P::new(0., 1.)],
            vec![vec![P::new(0.2, 0.2), P::new(0.8, 0.2), P::new(0.8, 0.8), P::new(0.2, 0.8)]],
        )
        .unwrap()
    }

    #[test]
    fn unit_square_cases() {
        let sq = Polygon2::rectangle(0.0, 0.0, 1.0, 1.0);
        assert_eq!(point_in_polygon(P::new(0.5, 0.5), &sq), Location::Inside);
        assert_eq!(point_in_polygon(P::new(2.0, 2.0), &sq), Location::Outside);
        assert_eq!(point_in_polygon(P::new(1.0, 0.3), &sq), Location::Boundary);
    }

    #[test]
    fn hole_is_outside() {
        let p = square_with_hole();
        assert_eq!(p.locate(P::new(0.5, 0.5)), Location::Outside);
        assert_eq!(p.locate(P::new(0.1, 0.5)), Location::Inside);
        assert!((p.area() - 0.64).abs() < 1e-12);
        assert!(ring_signed_area(&p.holes()[0]) < 0.0);
    }

    #[test]
    fn reorients_clockwise_outer() {
        let p = Polygon2::new(vec![P::new(0., 0.), P::new(0., 1.), P::new(1., 1.), P::new(1., 0.)], vec![]).unwrap();
        assert!(ring_signed_area(p.outer()) > 0.0);
    }

    #[test]
    fn rejects_bowtie() {
        let r = Polygon2::new(vec![P::new(0., 0.), P::new(1., 1.), P::new(1., 0.), P::new(0., 1.)], vec![]);
        assert!(matches!(r, Err(GeomError::InvalidGeometry(_))));
    }
}
