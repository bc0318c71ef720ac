//! Deterministic synthetic buildings: ground-truth meshes plus airborne-style samples
//! (roofs only, Gaussian noise along facet normals, uniform outliers).

pub mod fixtures;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{newell_normal, polygon3_area};
use crate::ingest::{save_ply, Footprint, FootprintSet, PointCloud};
use crate::{Error, Plane, Point2, Point3, Polygon2, Result, SurfaceMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    FlatBox,
    Gable,
    Hip,
    LShape,
    TwoTier,
    Overhang,
}

impl Archetype {
    pub const ALL: [Archetype; 6] =
        [Archetype::FlatBox, Archetype::Gable, Archetype::Hip, Archetype::LShape, Archetype::TwoTier, Archetype::Overhang];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::FlatBox => "flat-box",
            Archetype::Gable => "gable",
            Archetype::Hip => "hip",
            Archetype::LShape => "l-shape",
            Archetype::TwoTier => "two-tier",
            Archetype::Overhang => "overhang",
        }
    }
}

/// Building dimensions in meters. Interpretation per archetype:
///
/// * `length` × `width`: footprint extent along x and y.
/// * `height`: flat roof height, eave height (gable/hip) or the upper tier.
/// * `ridge`: ridge height (gable/hip).
/// * `low`: lower tier height (two-tier/overhang).
/// * `split`: x of the tier step (two-tier), of the upper block's wall (overhang),
///   or the notch corner for the L-shape (`split`, `notch_y`).
/// * `overhang`: width of the overhanging strip beyond `split`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub ridge: f64,
    pub low: f64,
    pub split: f64,
    pub notch_y: f64,
    pub overhang: f64,
}

impl Dimensions {
    pub fn defaults(a: Archetype) -> Self {
        let base = Dimensions { length: 10.0, width: 8.0, height: 5.0, ridge: 8.0, low: 4.0, split: 8.0, notch_y: 7.0, overhang: 1.0 };
        match a {
            Archetype::FlatBox => base,
            Archetype::Gable => Dimensions { length: 12.0, width: 8.0, height: 5.0, ridge: 8.0, ..base },
            Archetype::Hip => Dimensions { length: 14.0, width: 9.0, height: 5.0, ridge: 8.0, ..base },
            Archetype::LShape => Dimensions { length: 16.0, width: 12.0, height: 6.0, split: 10.0, notch_y: 7.0, ..base },
            Archetype::TwoTier => Dimensions { length: 16.0, width: 10.0, height: 7.0, low: 4.0, split: 8.0, ..base },
            Archetype::Overhang => Dimensions { length: 16.0, width: 10.0, height: 7.0, low: 4.0, split: 9.0, overhang: 1.0, ..base },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub archetype: Archetype,
    pub dims: Dimensions,
    /// Points per m² of roof.
    pub density: f64,
    /// Standard deviation of the noise along facet normals (m).
    pub sigma: f64,
    /// Fraction of the emitted points that are uniform outliers, in [0, 0.5).
    pub outlier_fraction: f64,
    pub seed: u64,
    /// Rotation about the z-axis applied after construction (degrees).
    pub rotation_deg: f64,
    /// Translation applied after rotation (x, y).
    pub origin: (f64, f64),
    /// Width of the ground band sampled around the footprint (m, 0 disables).
    pub ground_band: f64,
}

impl SynthSpec {
    pub fn new(archetype: Archetype) -> Self {
        Self {
            archetype,
            dims: Dimensions::defaults(archetype),
            density: 8.0,
            sigma: 0.05,
            outlier_fraction: 0.0,
            seed: 0,
            rotation_deg: 0.0,
            origin: (0.0, 0.0),
            ground_band: 3.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.density > 0.0) {
            return Err("density must be positive".into());
        }
        if !(self.sigma >= 0.0) {
            return Err("sigma must be non-negative".into());
        }
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return Err("outlier fraction must lie in [0, 0.5)".into());
        }
        Ok(())
    }
}

/// A roof facet that is sampled, with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct RoofFacet {
    pub polygon: Vec<Point3>,
    pub label: i64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub mesh: SurfaceMesh,
    /// Roof samples and outliers (the building's own points).
    pub cloud: PointCloud,
    /// Facet label per point of `cloud`; −1 for outliers.
    pub labels: Vec<i64>,
    pub footprint: Polygon2,
    pub facets: Vec<RoofFacet>,
    /// Ground returns in a band around the footprint at z = 0.
    pub ground: PointCloud,
}

impl Synthetic {
    /// Building points followed by ground points, as an airborne scene would hold them.
    pub fn scene_cloud(&self) -> PointCloud {
        let mut c = self.cloud.clone();
        c.instance_ids = None;
        c.extend(&self.ground);
        c
    }

    pub fn footprint_set(&self, id: &str) -> FootprintSet {
        FootprintSet { footprints: vec![Footprint { id: id.to_string(), polygon: self.footprint.clone() }] }
    }

    /// Roof facet planes, in label order.
    pub fn facet_planes(&self) -> Vec<Plane> {
        self.facets.iter().map(|f| Plane::from_point_normal(f.polygon[0], newell_normal(&f.polygon)).unwrap()).collect()
    }
}

struct MeshBuilder {
    vertices: Vec<Point3>,
    index: HashMap<[u64; 3], usize>,
    faces: Vec<Vec<usize>>,
}

impl MeshBuilder {
    fn new() -> Self {
        Self { vertices: Vec::new(), index: HashMap::new(), faces: Vec::new() }
    }

    fn vertex(&mut self, p: Point3) -> usize {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }

    fn face(&mut self, pts: &[Point3]) {
        let f = pts.iter().map(|&p| self.vertex(p)).collect();
        self.faces.push(f);
    }

    fn finish(self) -> SurfaceMesh {
        let mut m = SurfaceMesh::new(self.vertices, self.faces);
        m.orient_outward();
        m
    }
}

fn p3(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

/// Vertical prism over a CCW ring between `z0` and `z1`.
fn prism(mb: &mut MeshBuilder, ring: &[Point2], z0: f64, z1: f64) {
    mb.face(&ring.iter().map(|p| p.with_z(z0)).collect::<Vec<_>>());
    mb.face(&ring.iter().map(|p| p.with_z(z1)).collect::<Vec<_>>());
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        mb.face(&[a.with_z(z0), b.with_z(z0), b.with_z(z1), a.with_z(z1)]);
    }
}

/// Two flat tiers split at `x = s` (upper for x < s), as used by two-tier and overhang.
fn two_tier_mesh(mb: &mut MeshBuilder, l: f64, w: f64, s: f64, hi: f64, lo: f64) {
    mb.face(&[p3(0., 0., 0.), p3(l, 0., 0.), p3(l, w, 0.), p3(0., w, 0.)]);
    mb.face(&[p3(0., 0., hi), p3(s, 0., hi), p3(s, w, hi), p3(0., w, hi)]);
    mb.face(&[p3(s, 0., lo), p3(l, 0., lo), p3(l, w, lo), p3(s, w, lo)]);
    mb.face(&[p3(0., 0., 0.), p3(0., w, 0.), p3(0., w, hi), p3(0., 0., hi)]);
    mb.face(&[p3(l, 0., 0.), p3(l, w, 0.), p3(l, w, lo), p3(l, 0., lo)]);
    mb.face(&[p3(0., 0., 0.), p3(l, 0., 0.), p3(l, 0., lo), p3(s, 0., lo), p3(s, 0., hi), p3(0., 0., hi)]);
    mb.face(&[p3(0., w, 0.), p3(l, w, 0.), p3(l, w, lo), p3(s, w, lo), p3(s, w, hi), p3(0., w, hi)]);
    mb.face(&[p3(s, 0., lo), p3(s, w, lo), p3(s, w, hi), p3(s, 0., hi)]);
}

fn rect_facet(x0: f64, y0: f64, x1: f64, y1: f64, z: f64, label: i64) -> RoofFacet {
    RoofFacet { polygon: vec![p3(x0, y0, z), p3(x1, y0, z), p3(x1, y1, z), p3(x0, y1, z)], label }
}

/// Ground-truth mesh, footprint ring and sampled roof facets in local coordinates.
fn construct(a: Archetype, d: &Dimensions) -> (SurfaceMesh, Vec<Point2>, Vec<RoofFacet>) {
    let (l, w, h) = (d.length, d.width, d.height);
    let rect = vec![Point2::new(0., 0.), Point2::new(l, 0.), Point2::new(l, w), Point2::new(0., w)];
    let mut mb = MeshBuilder::new();
    match a {
        Archetype::FlatBox => {
            prism(&mut mb, &rect, 0.0, h);
            (mb.finish(), rect, vec![rect_facet(0., 0., l, w, h, 0)])
        }
        Archetype::Gable => {
            let r = d.ridge;
            let (e0, e1, e2, e3) = (p3(0., 0., h), p3(l, 0., h), p3(l, w, h), p3(0., w, h));
            let (g0, g1, g2, g3) = (p3(0., 0., 0.), p3(l, 0., 0.), p3(l, w, 0.), p3(0., w, 0.));
            let (r0, r1) = (p3(0., w / 2., r), p3(l, w / 2., r));
            mb.face(&[g0, g1, g2, g3]);
            mb.face(&[g0, g1, e1, e0]);
            mb.face(&[g2, g3, e3, e2]);
            mb.face(&[g3, g0, e0, r0, e3]);
            mb.face(&[g1, g2, e2, r1, e1]);
            let south = vec![e0, e1, r1, r0];
            let north = vec![e2, e3, r0, r1];
            mb.face(&south);
            mb.face(&north);
            let facets = vec![RoofFacet { polygon: south, label: 0 }, RoofFacet { polygon: north, label: 1 }];
            (mb.finish(), rect, facets)
        }
        Archetype::Hip => {
            let r = d.ridge;
            let a = w / 2.0;
            let (e0, e1, e2, e3) = (p3(0., 0., h), p3(l, 0., h), p3(l, w, h), p3(0., w, h));
            let (g0, g1, g2, g3) = (p3(0., 0., 0.), p3(l, 0., 0.), p3(l, w, 0.), p3(0., w, 0.));
            let (r0, r1) = (p3(a, w / 2., r), p3(l - a, w / 2., r));
            mb.face(&[g0, g1, g2, g3]);
            mb.face(&[g0, g1, e1, e0]);
            mb.face(&[g1, g2, e2, e1]);
            mb.face(&[g2, g3, e3, e2]);
            mb.face(&[g3, g0, e0, e3]);
            let facets = vec![
                RoofFacet { polygon: vec![e0, e1, r1, r0], label: 0 },
                RoofFacet { polygon: vec![e1, e2, r1], label: 1 },
                RoofFacet { polygon: vec![e2, e3, r0, r1], label: 2 },
                RoofFacet { polygon: vec![e3, e0, r0], label: 3 },
            ];
            for f in &facets {
                mb.face(&f.polygon);
            }
            (mb.finish(), rect, facets)
        }
        Archetype::LShape => {
            let (sx, sy) = (d.split, d.notch_y);
            let ring = vec![
                Point2::new(0., 0.),
                Point2::new(l, 0.),
                Point2::new(l, sy),
                Point2::new(sx, sy),
                Point2::new(sx, w),
                Point2::new(0., w),
            ];
            prism(&mut mb, &ring, 0.0, h);
            let facet = RoofFacet { polygon: ring.iter().map(|p| p.with_z(h)).collect(), label: 0 };
            (mb.finish(), ring, vec![facet])
        }
        Archetype::TwoTier => {
            let s = d.split;
            two_tier_mesh(&mut mb, l, w, s, h, d.low);
            let facets = vec![rect_facet(0., 0., s, w, h, 0), rect_facet(s, 0., l, w, d.low, 1)];
            (mb.finish(), rect, facets)
        }
        Archetype::Overhang => {
            let s = d.split;
            let edge = s + d.overhang;
            two_tier_mesh(&mut mb, l, w, edge, h, d.low);
            // The porch roof continues underneath the semi-transparent overhang.
            let facets = vec![
                rect_facet(0., 0., edge, w, h, 0),
                rect_facet(edge, 0., l, w, d.low, 1),
                rect_facet(s, 0., edge, w, d.low, 1),
            ];
            (mb.finish(), rect, facets)
        }
    }
}

fn sample_polygon(poly: &[Point3], count: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let tris: Vec<[Point3; 3]> = (1..poly.len() - 1).map(|k| [poly[0], poly[k], poly[k + 1]]).collect();
    let areas: Vec<f64> = tris.iter().map(|t| polygon3_area(t)).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pick = rng.gen::<f64>() * total;
        let mut ti = 0;
        while ti + 1 < tris.len() && pick > areas[ti] {
            pick -= areas[ti];
            ti += 1;
        }
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = tris[ti];
        out.push(a + (b - a) * u + (c - a) * v);
    }
    out
}

fn transform(spec: &SynthSpec, p: Point3) -> Point3 {
    let (s, c) = spec.rotation_deg.to_radians().sin_cos();
    if spec.rotation_deg == 0.0 {
        return p3(p.x + spec.origin.0, p.y + spec.origin.1, p.z);
    }
    p3(c * p.x - s * p.y + spec.origin.0, s * p.x + c * p.y + spec.origin.1, p.z)
}

/// Writes several generated buildings as one scene: `scene.ply` (binary little-endian, ground
/// included) and `footprints.geojson` with the given ids. Returns both paths.
pub fn write_scene(buildings: &[(String, Synthetic)], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let mut cloud = PointCloud::default();
    let mut fps = Vec::new();
    for (id, b) in buildings {
        cloud.extend(&b.scene_cloud());
        fps.push(Footprint { id: id.clone(), polygon: b.footprint.clone() });
    }
    let cloud_path = dir.join("scene.ply");
    save_ply(&cloud, &cloud_path, true)?;
    let fp_path = dir.join("footprints.geojson");
    std::fs::write(&fp_path, FootprintSet::new(fps)?.to_geojson()).map_err(|e| Error::io(&fp_path, e))?;
    Ok((cloud_path, fp_path))
}

/// Generates the ground truth and samples for `spec`; identical specs give bit-identical output.
pub fn generate(spec: &SynthSpec) -> Synthetic {
    spec.validate().expect("valid synthetic spec");
    let (mesh, ring, facets) = construct(spec.archetype, &spec.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma.max(0.0)).expect("valid sigma");

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for f in &facets {
        let n = newell_normal(&f.polygon).normalized();
        let count = (spec.density * polygon3_area(&f.polygon)).round() as usize;
        for p in sample_polygon(&f.polygon, count, &mut rng) {
            let offset = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            points.push(p + n * offset);
            labels.push(f.label);
        }
    }
    let z_top = facets.iter().flat_map(|f| f.polygon.iter().map(|p| p.z)).fold(0.0, f64::max);
    let outliers = if spec.outlier_fraction > 0.0 {
        (points.len() as f64 * spec.outlier_fraction / (1.0 - spec.outlier_fraction)).round() as usize
    } else {
        0
    };
    let (lo, hi) = ring.iter().fold(
        (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN)),
        |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))),
    );
    for _ in 0..outliers {
        let x = rng.gen_range(lo.x..hi.x);
        let y = rng.gen_range(lo.y..hi.y);
        let z = rng.gen_range(0.0..z_top + 2.0);
        points.push(p3(x, y, z));
        labels.push(-1);
    }

    let local_fp = Polygon2::new(ring.clone(), vec![]).expect("archetype footprint is valid");
    let mut ground = Vec::new();
    if spec.ground_band > 0.0 {
        let b = spec.ground_band;
        let band_area = (hi.x - lo.x + 2.0 * b) * (hi.y - lo.y + 2.0 * b);
        let count = (spec.density * band_area).round() as usize;
        for _ in 0..count {
            let q = Point2::new(rng.gen_range(lo.x - b..hi.x + b), rng.gen_range(lo.y - b..hi.y + b));
            if !local_fp.contains(q) {
                let dz = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                ground.push(q.with_z(dz));
            }
        }
    }

    let mesh = SurfaceMesh::new(mesh.vertices.iter().map(|&p| transform(spec, p)).collect(), mesh.faces);
    let footprint =
        Polygon2::new(ring.iter().map(|p| transform(spec, p.with_z(0.0)).xy()).collect(), vec![]).expect("rigid motion keeps validity");
    let facets = facets
        .into_iter()
        .map(|f| RoofFacet { polygon: f.polygon.iter().map(|&p| transform(spec, p)).collect(), label: f.label })
        .collect();
    let mut cloud = PointCloud::from_points(points.into_iter().map(|p| transform(spec, p)).collect());
    cloud.instance_ids = Some(vec![1; cloud.len()]);
    let ground = PointCloud::from_points(ground.into_iter().map(|p| transform(spec, p)).collect());
    Synthetic { mesh, cloud, labels, footprint, facets, ground }
}

/// Facet label of every point (−1 for outliers).
///
/// When `cloud` is exactly the sample generated from `spec` the recorded labels are
/// returned; otherwise points are labeled by the nearest facet within 3σ + 1 cm whose
/// projection contains them.
pub fn label_points(spec: &SynthSpec, cloud: &PointCloud) -> Vec<i64> {
    let synth = generate(spec);
    if synth.cloud.points == cloud.points {
        return synth.labels;
    }
    let planes = synth.facet_planes();
    let tol = 3.0 * spec.sigma + 0.01;
    cloud
        .points
        .iter()
        .map(|&p| {
            let mut best = (f64::MAX, -1);
            for (f, pl) in synth.facets.iter().zip(&planes) {
                let d = pl.distance(p);
                let ring: Vec<Point2> = f.polygon.iter().map(|q| q.xy()).collect();
                let inside = Polygon2::new(ring, vec![]).map(|poly| poly.contains(p.xy())).unwrap_or(false);
                if d <= tol && inside && d < best.0 {
                    best = (d, f.label);
                }
            }
            best.1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_box_points_on_roof() {
        let s = generate(&SynthSpec::new(Archetype::FlatBox).with_noise(0.0));
        assert!(!s.cloud.is_empty());
        assert_eq!(s.cloud.len(), 640);
        for p in &s.cloud.points {
            assert_eq!(p.z, 5.0);
            assert!(s.footprint.contains(p.xy()));
        }
    }

    #[test]
    fn gable_points_on_planes() {
        let s = generate(&SynthSpec::new(Archetype::Gable).with_noise(0.0));
        let planes = s.facet_planes();
        for p in &s.cloud.points {
            let d = planes.iter().map(|pl| pl.distance(*p)).fold(f64::MAX, f64::min);
            assert!(d < 1e-9, "{d}");
        }
        let labels = label_points(&SynthSpec::new(Archetype::Gable).with_noise(0.0), &s.cloud);
        let south = labels.iter().filter(|&&l| l == 0).count();
        let north = labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(south, north);
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::new(Archetype::Hip).with_seed(9);
        let (a, b) = (generate(&spec), generate(&spec));
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.ground, b.ground);
    }

    #[test]
    fn outlier_fraction_respected() {
        let mut spec = SynthSpec::new(Archetype::FlatBox);
        spec.outlier_fraction = 0.49;
        let s = generate(&spec);
        let out = s.labels.iter().filter(|&&l| l == -1).count() as f64 / s.labels.len() as f64;
        assert!((out - 0.49).abs() < 0.01, "{out}");
    }

    #[test]
    fn meshes_are_closed_and_outward() {
        for a in Archetype::ALL {
            let s = generate(&SynthSpec::new(a));
            assert!(s.mesh.signed_volume() > 0.0, "{a:?}");
            assert!(s.mesh.clone().finalize().is_ok(), "{a:?}");
        }
    }
}
