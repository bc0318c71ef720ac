//! TIN construction, heightmap rasterization, morphology and heightmap dumps.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geom::{delaunay, GeomError};
use crate::ingest::BuildingInstance;
use crate::{Point2, Point3, Result};

/// 2D Delaunay triangulation of projected points; vertices keep their elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tin {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Tin {
    /// Triangulates the xy-projection of `points`. Coincident projections keep the highest z.
    pub fn from_points(points: &[Point3]) -> Result<Tin> {
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut vertices: Vec<Point3> = Vec::new();
        for p in points {
            if !p.is_finite() {
                continue;
            }
            // Normalize -0.0 so equal coordinates hash equally.
            let key = ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits());
            match index.get(&key) {
                Some(&i) => vertices[i].z = vertices[i].z.max(p.z),
                None => {
                    index.insert(key, vertices.len());
                    vertices.push(*p);
                }
            }
        }
        if vertices.len() < 3 {
            return Err(GeomError::DegenerateInput(format!("TIN needs 3 distinct projections, got {}", vertices.len())).into());
        }
        let xy: Vec<Point2> = vertices.iter().map(|p| p.xy()).collect();
        let d = delaunay(&xy)?;
        if d.triangles.is_empty() {
            return Err(GeomError::DegenerateInput("projected points are collinear".into()).into());
        }
        Ok(Tin { vertices, triangles: d.triangles })
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        self.vertices.iter().fold(
            (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))),
        )
    }

    pub fn z_range(&self) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)))
    }
}

pub fn build_tin(instance: &BuildingInstance) -> Result<Tin> {
    Tin::from_points(&instance.cloud.points)
}

/// Regular elevation grid. Pixel `(i, j)` has its center at
/// `origin + ((i + ½)·r, (j + ½)·r)`; row `j` grows with y.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    pub origin: Point2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// Elevation assumed for invalid pixels by image operators.
    pub fill: f64,
}

impl Heightmap {
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize, fill: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self { origin, resolution, width, height, values: vec![fill; width * height], valid: vec![false; width * height], fill }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.idx(i, j);
        self.valid[k].then(|| self.values[k])
    }

    pub fn set(&mut self, i: usize, j: usize, z: f64) {
        let k = self.idx(i, j);
        self.values[k] = z;
        self.valid[k] = true;
    }

    /// Values with invalid pixels replaced by `fill`.
    pub fn filled(&self) -> Vec<f64> {
        self.values.iter().zip(&self.valid).map(|(&v, &ok)| if ok { v } else { self.fill }).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Grid covering `[lo, hi]` padded by two pixels on each side.
    pub fn covering(lo: Point2, hi: Point2, resolution: f64, fill: f64) -> Self {
        let pad = 2.0 * resolution;
        let origin = Point2::new(lo.x - pad, lo.y - pad);
        let width = ((hi.x - lo.x) / resolution).ceil().max(1.0) as usize + 4;
        let height = ((hi.y - lo.y) / resolution).ceil().max(1.0) as usize + 4;
        Self::new(origin, resolution, width, height, fill)
    }
}

/// Rasterizes `tin` over its own bounding box.
pub fn rasterize_tin(tin: &Tin, r: f64) -> Heightmap {
    let (lo, hi) = tin.bounds();
    rasterize_tin_over(tin, r, lo, hi)
}

/// Rasterizes `tin` over the box `[lo, hi]` (padded by two pixels). Pixel centers inside a
/// triangle receive the barycentric interpolation of its vertex elevations.
pub fn rasterize_tin_over(tin: &Tin, r: f64, lo: Point2, hi: Point2) -> Heightmap {
    rasterize_tin_filtered(tin, r, lo, hi, f64::INFINITY)
}

/// As [`rasterize_tin_over`], skipping triangles with an edge longer than `max_edge`: such
/// triangles bridge unsampled space (e.g. the notch of a concave building) rather than
/// roof surface.
pub fn rasterize_tin_filtered(tin: &Tin, r: f64, lo: Point2, hi: Point2, max_edge: f64) -> Heightmap {
    let (zmin, _) = tin.z_range();
    let mut hm = Heightmap::covering(lo, hi, r, zmin);
    for t in &tin.triangles {
        let [a, b, c] = t.map(|k| tin.vertices[k]);
        if a.xy().distance(b.xy()) > max_edge || b.xy().distance(c.xy()) > max_edge || c.xy().distance(a.xy()) > max_edge {
            continue;
        }
        let (pa, pb, pc) = (a.xy(), b.xy(), c.xy());
        let det = (pb - pa).cross(pc - pa);
        if det.abs() <= f64::EPSILON {
            continue;
        }
        let tlo = Point2::new(pa.x.min(pb.x).min(pc.x), pa.y.min(pb.y).min(pc.y));
        let thi = Point2::new(pa.x.max(pb.x).max(pc.x), pa.y.max(pb.y).max(pc.y));
        let to_i = |x: f64, o: f64| ((x - o) / r - 0.5).ceil().max(0.0) as usize;
        let to_hi = |x: f64, o: f64, n: usize| (((x - o) / r - 0.5).floor()).min(n as f64 - 1.0);
        let (i0, j0) = (to_i(tlo.x, hm.origin.x), to_i(tlo.y, hm.origin.y));
        let (i1, j1) = (to_hi(thi.x, hm.origin.x, hm.width), to_hi(thi.y, hm.origin.y, hm.height));
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        let tol = 1e-12 * det.abs();
        for j in j0..=j1 as usize {
            for i in i0..=i1 as usize {
                if hm.valid[hm.idx(i, j)] {
                    continue;
                }
                let p = hm.center(i, j);
                let wb = (pc - p).cross(pa - p) / det;
                let wc = (pa - p).cross(pb - p) / det;
                let wa = 1.0 - wb - wc;
                if wa >= -tol && wb >= -tol && wc >= -tol {
                    hm.set(i, j, a.z + wb * (b.z - a.z) + wc * (c.z - a.z));
                }
            }
        }
    }
    hm
}

fn window<F: FnMut(usize, usize)>(hm: &Heightmap, i: usize, j: usize, half: usize, mut f: F) {
    let (i0, i1) = (i.saturating_sub(half), (i + half).min(hm.width - 1));
    let (j0, j1) = (j.saturating_sub(half), (j + half).min(hm.height - 1));
    for jj in j0..=j1 {
        for ii in i0..=i1 {
            f(ii, jj);
        }
    }
}

/// Grayscale closing (dilation, then erosion) with a square `kernel`×`kernel` window.
/// Invalid pixels are ignored by both passes and the validity mask is closed the same way;
/// pixels beyond the grid are treated as absent.
pub fn morph_close(hm: &Heightmap, kernel: usize) -> Heightmap {
    assert!(kernel % 2 == 1, "kernel must be odd");
    let half = kernel / 2;
    let mut dil = hm.clone();
    for j in 0..hm.height {
        for i in 0..hm.width {
            let mut best = f64::NEG_INFINITY;
            window(hm, i, j, half, |a, b| {
                if let Some(v) = hm.get(a, b) {
                    best = best.max(v);
                }
            });
            let k = hm.idx(i, j);
            dil.valid[k] = best > f64::NEG_INFINITY;
            dil.values[k] = if dil.valid[k] { best } else { hm.fill };
        }
    }
    let mut out = dil.clone();
    for j in 0..hm.height {
        for i in 0..hm.width {
            let mut best = f64::INFINITY;
            let mut all_valid = true;
            window(&dil, i, j, half, |a, b| match dil.get(a, b) {
                Some(v) => best = best.min(v),
                None => all_valid = false,
            });
            let k = hm.idx(i, j);
            // A pixel that was valid before closing stays valid (closing is extensive).
            out.valid[k] = hm.valid[k] || (all_valid && dil.valid[k]);
            out.values[k] = if out.valid[k] { best } else { hm.fill };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightmapMeta {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Elevation mapped to gray level 1; level 0 marks invalid pixels.
    pub z_min: f64,
    /// Elevation mapped to gray level 65535.
    pub z_max: f64,
}

/// Writes a 16-bit binary PGM (top row = largest y) and returns the sidecar metadata.
pub fn write_pgm<W: Write>(hm: &Heightmap, mut w: W) -> std::io::Result<HeightmapMeta> {
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (v, ok) in hm.values.iter().zip(&hm.valid) {
        if *ok {
            zmin = zmin.min(*v);
            zmax = zmax.max(*v);
        }
    }
    if !zmin.is_finite() {
        zmin = 0.0;
        zmax = 0.0;
    }
    let span = (zmax - zmin).max(1e-12);
    write!(w, "P5\n{} {}\n65535\n", hm.width, hm.height)?;
    let mut buf = Vec::with_capacity(hm.width * hm.height * 2);
    for j in (0..hm.height).rev() {
        for i in 0..hm.width {
            let level = match hm.get(i, j) {
                Some(v) => 1 + ((v - zmin) / span * 65534.0).round() as u16,
                None => 0,
            };
            buf.extend_from_slice(&level.to_be_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(HeightmapMeta {
        origin: [hm.origin.x, hm.origin.y],
        resolution: hm.resolution,
        width: hm.width,
        height: hm.height,
        z_min: zmin,
        z_max: zmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn square_tin() {
        let tin = Tin::from_points(&[p(0., 0., 1.), p(1., 0., 1.), p(1., 1., 1.), p(0., 1., 1.)]).unwrap();
        assert_eq!(tin.triangles.len(), 2);
    }

    #[test]
    fn collinear_tin_rejected() {
        let pts: Vec<_> = (0..10).map(|i| p(i as f64, 0.5 * i as f64, 3.0)).collect();
        assert!(Tin::from_points(&pts).is_err());
    }

    #[test]
    fn duplicates_keep_max() {
        let tin = Tin::from_points(&[p(0., 0., 1.), p(0., 0., 4.), p(1., 0., 0.), p(0., 1., 0.)]).unwrap();
        assert_eq!(tin.vertices.len(), 3);
        assert_eq!(tin.vertices[0].z, 4.0);
    }

    #[test]
    fn empty_circumcircle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..500).map(|_| p(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), 0.0)).collect();
        let tin = Tin::from_points(&pts).unwrap();
        for t in &tin.triangles {
            let [a, b, c] = t.map(|k| tin.vertices[k].xy());
            // Circumcircle via perpendicular bisector solve.
            let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
            let (a2, b2, c2) = (a.dot(a), b.dot(b), c.dot(c));
            let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
            let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
            let center = Point2::new(ux, uy);
            let rad = center.distance(a);
            for v in &tin.vertices {
                assert!(center.distance(v.xy()) >= rad - 1e-6 * rad.max(1.0));
            }
        }
    }

    #[test]
    fn flat_tin_raster() {
        let pts = [p(0., 0., 7.), p(10., 0., 7.), p(10., 6., 7.), p(0., 6., 7.), p(4., 3., 7.)];
        let hm = rasterize_tin(&Tin::from_points(&pts).unwrap(), 0.2);
        assert!(hm.valid_count() > 1000);
        for j in 0..hm.height {
            for i in 0..hm.width {
                if let Some(v) = hm.get(i, j) {
                    assert_eq!(v, 7.0);
                }
            }
        }
        // Two-pixel padding leaves the border invalid.
        assert!(hm.get(0, 0).is_none() && hm.get(1, 1).is_none());
    }

    #[test]
    fn ramp_is_exact() {
        let pts = [p(0., 0., 0.), p(10., 0., 10.), p(10., 6., 10.), p(0., 6., 0.), p(3., 2., 3.)];
        let hm = rasterize_tin(&Tin::from_points(&pts).unwrap(), 0.2);
        for j in 0..hm.height {
            for i in 0..hm.width {
                if let Some(v) = hm.get(i, j) {
                    assert!((v - hm.center(i, j).x).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn closing_fills_hole() {
        let mut hm = Heightmap::new(Point2::new(0., 0.), 1.0, 7, 7, 0.0);
        for j in 0..7 {
            for i in 0..7 {
                hm.set(i, j, 3.0);
            }
        }
        let k = hm.idx(3, 3);
        hm.valid[k] = false;
        let c = morph_close(&hm, 3);
        assert_eq!(c.get(3, 3), Some(3.0));
        assert!(c.valid.iter().all(|&v| v));
        assert!(c.values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn closing_is_extensive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hm = Heightmap::new(Point2::new(0., 0.), 0.5, 20, 15, 0.0);
        for j in 0..15 {
            for i in 0..20 {
                if rng.gen::<f64>() < 0.9 {
                    hm.set(i, j, rng.gen_range(0.0..10.0));
                }
            }
        }
        let c = morph_close(&hm, 3);
        for k in 0..hm.values.len() {
            if hm.valid[k] {
                assert!(c.valid[k] && c.values[k] >= hm.values[k]);
            }
        }
    }

    #[test]
    fn pgm_header_and_size() {
        let pts = [p(0., 0., 1.), p(2., 0., 1.), p(2., 2., 3.), p(0., 2., 3.)];
        let hm = rasterize_tin(&Tin::from_points(&pts).unwrap(), 0.5);
        let mut buf = Vec::new();
        let meta = write_pgm(&hm, &mut buf).unwrap();
        let header = format!("P5\n{} {}\n65535\n", hm.width, hm.height);
        assert!(buf.starts_with(header.as_bytes()));
        assert_eq!(buf.len(), header.len() + 2 * hm.width * hm.height);
        assert!(meta.z_min >= 1.0 && meta.z_max <= 3.0 && meta.z_min < meta.z_max);
    }
}
