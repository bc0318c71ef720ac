use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen3;
use super::{GeomError, Point3, Scalar, Vector3};

/// An oriented plane `normal · p + d = 0` with unit normal in canonical orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane<T> {
    normal: Vector3<T>,
    d: T,
}

impl<T: Scalar> Plane<T> {
    /// Builds a plane from any non-zero normal; the result is normalized and canonical.
    pub fn new(normal: Vector3<T>, d: T) -> Result<Self, GeomError> {
        let n = normal.norm();
        if !(n > T::lit(1e-12)) || !n.is_finite() || !d.is_finite() {
            return Err(GeomError::DegenerateInput("plane normal has zero length".into()));
        }
        Ok(Self::canonical(normal / n, d / n))
    }

    pub fn from_point_normal(p: Point3<T>, normal: Vector3<T>) -> Result<Self, GeomError> {
        let n = normal.norm();
        if !(n > T::lit(1e-12)) {
            return Err(GeomError::DegenerateInput("plane normal has zero length".into()));
        }
        let n = normal / n;
        Ok(Self::canonical(n, -n.dot(p)))
    }

    /// Horizontal plane `z = h`.
    pub fn horizontal(h: T) -> Self {
        Self { normal: Vector3::unit_z(), d: -h }
    }

    // Largest-magnitude component positive; exact ties resolved by axis order.
    fn canonical(n: Vector3<T>, d: T) -> Self {
        let a = [n.x.abs(), n.y.abs(), n.z.abs()];
        let mut axis = 0;
        for (i, &v) in a.iter().enumerate().skip(1) {
            if v > a[axis] {
                axis = i;
            }
        }
        if n.component(axis) < T::zero() {
            Self { normal: -n, d: -d }
        } else {
            Self { normal: n, d }
        }
    }

    pub fn normal(&self) -> Vector3<T> {
        self.normal
    }

    pub fn offset(&self) -> T {
        self.d
    }

    pub fn signed_distance(&self, p: Point3<T>) -> T {
        self.normal.dot(p) + self.d
    }

    pub fn distance(&self, p: Point3<T>) -> T {
        self.signed_distance(p).abs()
    }

    pub fn project(&self, p: Point3<T>) -> Point3<T> {
        p - self.normal * self.signed_distance(p)
    }

    /// Height of the plane above `(x, y)`; `None` for vertical planes.
    pub fn z_at(&self, x: T, y: T) -> Option<T> {
        if self.normal.z.abs() <= T::lit(1e-9) {
            return None;
        }
        Some(-(self.normal.x * x + self.normal.y * y + self.d) / self.normal.z)
    }

    pub fn is_vertical(&self, tol: T) -> bool {
        self.normal.z.abs() <= tol
    }

    /// Angle between the unoriented normals, in radians.
    pub fn angle_to(&self, other: &Self) -> T {
        self.normal.dot(other.normal).abs().min(T::one()).acos()
    }

    /// The same plane expressed with the opposite orientation check skipped.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.normal - other.normal).norm() <= tol && (self.d - other.d).abs() <= tol
    }
}

/// Least-squares plane through `points` (minimizes squared orthogonal distances).
pub fn fit_plane<T: Scalar>(points: &[Point3<T>]) -> Result<Plane<T>, GeomError> {
    if points.len() < 3 {
        return Err(GeomError::DegenerateInput(format!("{} points cannot define a plane", points.len())));
    }
    let n = T::from_usize(points.len()).unwrap();
    let mut c = Point3::zero();
    for &p in points {
        c += p;
    }
    let c = c / n;
    let mut m = [[T::zero(); 3]; 3];
    for &p in points {
        let q = (p - c).to_array();
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += q[i] * q[j];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen3(m);
    // RMS spread along the second principal direction.
    let spread = (vals[1].max(T::zero()) / n).sqrt();
    if !(spread > T::lit(1e-9)) {
        return Err(GeomError::DegenerateInput("points are collinear or coincident".into()));
    }
    Plane::from_point_normal(c, Point3::from_array(vecs[0]))
}

/// The unique common point of three planes, if their normals are independent.
pub fn intersect_three_planes<T: Scalar>(a: &Plane<T>, b: &Plane<T>, c: &Plane<T>) -> Option<Point3<T>> {
    let (n1, n2, n3) = (a.normal(), b.normal(), c.normal());
    let n23 = n2.cross(n3);
    let det = n1.dot(n23);
    if det.abs() <= T::lit(1e-9) {
        return None;
    }
    let n31 = n3.cross(n1);
    let n12 = n1.cross(n2);
    let p = -(n23 * a.offset() + n31 * b.offset() + n12 * c.offset()) / det;
    p.is_finite().then_some(p)
}

/// Intersection line of two planes as (point, unit direction); `None` when parallel.
pub fn intersect_two_planes<T: Scalar>(a: &Plane<T>, b: &Plane<T>) -> Option<(Point3<T>, Vector3<T>)> {
    let dir = a.normal().cross(b.normal());
    let len = dir.norm();
    if len <= T::lit(1e-9) {
        return None;
    }
    let dir = dir / len;
    let helper = Plane { normal: dir, d: T::zero() };
    intersect_three_planes(a, b, &helper).map(|p| (p, dir))
}
