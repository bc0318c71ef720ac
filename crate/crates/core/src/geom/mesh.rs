use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{GeomError, Point3, Scalar, Vector3};

/// Newell normal of a polygon; its length is twice the polygon area.
pub fn newell_normal<T: Scalar>(poly: &[Point3<T>]) -> Vector3<T> {
    let n = poly.len();
    let mut acc = Vector3::zero();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc.x += (a.y - b.y) * (a.z + b.z);
        acc.y += (a.z - b.z) * (a.x + b.x);
        acc.z += (a.x - b.x) * (a.y + b.y);
    }
    acc
}

pub fn polygon3_area<T: Scalar>(poly: &[Point3<T>]) -> T {
    newell_normal(poly).norm() / T::lit(2.0)
}

/// Undirected edge key with the smaller vertex index first.
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Indexed polygonal mesh. Faces are vertex-index rings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurfaceMesh<T> {
    pub vertices: Vec<Point3<T>>,
    pub faces: Vec<Vec<usize>>,
}

impl<T: Scalar> SurfaceMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<Vec<usize>>) -> Self {
        Self { vertices, faces }
    }

    pub fn face_points(&self, f: usize) -> Vec<Point3<T>> {
        self.faces[f].iter().map(|&i| self.vertices[i]).collect()
    }

    pub fn face_normal(&self, f: usize) -> Vector3<T> {
        newell_normal(&self.face_points(f)).normalized()
    }

    pub fn face_area(&self, f: usize) -> T {
        polygon3_area(&self.face_points(f))
    }

    /// Undirected edge → incident face indices (a face using an edge twice is listed twice).
    pub fn edge_table(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut table: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..f.len() {
                table.entry(edge_key(f[k], f[(k + 1) % f.len()])).or_default().push(fi);
            }
        }
        table
    }

    /// Signed enclosed volume (divergence theorem over fan triangles).
    pub fn signed_volume(&self) -> T {
        let mut v = T::zero();
        for tri in self.triangles() {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            v += a.dot(b.cross(c));
        }
        v / T::lit(6.0)
    }

    /// Fan triangulation of every face, as vertex index triples.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for f in &self.faces {
            for k in 1..f.len().saturating_sub(1) {
                out.push([f[0], f[k], f[k + 1]]);
            }
        }
        out
    }

    /// Checks index ranges, face areas and that every edge has exactly two incident faces.
    pub fn finalize(self) -> Result<Self, GeomError> {
        let min_area = T::lit(super::MIN_POLYGON_AREA);
        for (fi, f) in self.faces.iter().enumerate() {
            if f.len() < 3 {
                return Err(GeomError::InvalidGeometry(format!("face {fi} has fewer than 3 vertices")));
            }
            if let Some(&i) = f.iter().find(|&&i| i >= self.vertices.len()) {
                return Err(GeomError::InvalidGeometry(format!("face {fi} references vertex {i} out of range")));
            }
            if self.face_area(fi) < min_area {
                return Err(GeomError::InvalidGeometry(format!("face {fi} has (near) zero area")));
            }
        }
        for (edge, faces) in self.edge_table() {
            if faces.len() != 2 {
                return Err(GeomError::NonManifold { edge, count: faces.len() });
            }
        }
        Ok(self)
    }

    /// Makes face orientations consistent across shared edges and flips each connected
    /// component so that its enclosed volume is positive.
    pub fn orient_outward(&mut self) {
        let nf = self.faces.len();
        let mut directed: std::collections::HashMap<(usize, usize), Vec<usize>> = std::collections::HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..f.len() {
                directed.entry(edge_key(f[k], f[(k + 1) % f.len()])).or_default().push(fi);
            }
        }
        let mut done = vec![false; nf];
        for start in 0..nf {
            if done[start] {
                continue;
            }
            done[start] = true;
            let mut component = vec![start];
            let mut head = 0;
            while head < component.len() {
                let fi = component[head];
                head += 1;
                let ring = self.faces[fi].clone();
                for k in 0..ring.len() {
                    let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
                    for &g in &directed[&edge_key(a, b)] {
                        if done[g] {
                            continue;
                        }
                        let gr = &self.faces[g];
                        let same_dir = (0..gr.len()).any(|m| gr[m] == a && gr[(m + 1) % gr.len()] == b);
                        if same_dir {
                            self.faces[g].reverse();
                        }
                        done[g] = true;
                        component.push(g);
                    }
                }
            }
            let mut vol = T::zero();
            for &fi in &component {
                let f = &self.faces[fi];
                for k in 1..f.len() - 1 {
                    let (a, b, c) = (self.vertices[f[0]], self.vertices[f[k]], self.vertices[f[k + 1]]);
                    vol += a.dot(b.cross(c));
                }
            }
            if vol < T::zero() {
                for &fi in &component {
                    self.faces[fi].reverse();
                }
            }
        }
    }

    /// Writes Wavefront OBJ with 6 decimal places; `triangulate` fans every face.
    pub fn write_obj<W: Write>(&self, mut w: W, triangulate: bool) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {:.6} {:.6} {:.6}", v.x.to_f64_lossy(), v.y.to_f64_lossy(), v.z.to_f64_lossy())?;
        }
        if triangulate {
            for t in self.triangles() {
                writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
            }
        } else {
            for f in &self.faces {
                let idx: Vec<String> = f.iter().map(|i| (i + 1).to_string()).collect();
                writeln!(w, "f {}", idx.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Axis-aligned closed box with outward-oriented quads.
pub fn box_mesh<T: Scalar>(lo: Point3<T>, hi: Point3<T>) -> SurfaceMesh<T> {
    let v = vec![
        Point3::new(lo.x, lo.y, lo.z),
        Point3::new(hi.x, lo.y, lo.z),
        Point3::new(hi.x, hi.y, lo.z),
        Point3::new(lo.x, hi.y, lo.z),
        Point3::new(lo.x, lo.y, hi.z),
        Point3::new(hi.x, lo.y, hi.z),
        Point3::new(hi.x, hi.y, hi.z),
        Point3::new(lo.x, hi.y, hi.z),
    ];
    let f = vec![
        vec![0, 3, 2, 1],
        vec![4, 5, 6, 7],
        vec![0, 1, 5, 4],
        vec![1, 2, 6, 5],
        vec![2, 3, 7, 6],
        vec![3, 0, 4, 7],
    ];
    SurfaceMesh::new(v, f)
}
