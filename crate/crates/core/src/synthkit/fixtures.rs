//! Hand-built inputs for regularization and selection experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::hypothesize::{build_arrangement, compute_vertical_groups, designate_priors, CandidateSet, FaceKind, FaceSource, HypothesisParams};
use crate::plane_detect::{PlanarSegment, SegmentKind};
use crate::wall_infer::{Polyline, PolylineSet, VerticalPlane, VerticalPlaneSet, WallTag};
use crate::{Plane, Point2, Point3, Polygon2, Vector2, Vector3};

/// A 20 × 10 m rectangle whose long side points along (4, 3): the footprint edge directions
/// are exactly orthogonal in floating point.
pub fn rotated_rectangle() -> Polygon2 {
    let c = [Point2::new(0.0, 0.0), Point2::new(16.0, 12.0), Point2::new(10.0, 20.0), Point2::new(-6.0, 8.0)];
    Polygon2::new(c.to_vec(), vec![]).expect("valid rectangle")
}

/// The outline of [`rotated_rectangle`] traced as one closed polyline of 28 segments (seven per
/// side) with vertices jittered across the side by N(0, `sigma`²).
pub fn noisy_rectangle(seed: u64, sigma: f64) -> (PolylineSet, Polygon2) {
    let fp = rotated_rectangle();
    let c = fp.outer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut pts = Vec::with_capacity(28);
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        let d = b - a;
        let n = Vector2::new(-d.y, d.x).normalized();
        for i in 0..7 {
            let p = a + d * (i as f64 / 7.0);
            pts.push(p + n * noise.sample(&mut rng));
        }
    }
    (PolylineSet { polylines: vec![Polyline::new(pts, true)] }, fp)
}

fn roof(plane: Plane) -> PlanarSegment {
    PlanarSegment { inliers: vec![], plane, kind: SegmentKind::Roof, support: 0 }
}

fn finish(mut cs: CandidateSet) -> CandidateSet {
    cs.vertical_groups = compute_vertical_groups(&cs.faces, HypothesisParams::default().min_overlap_area);
    cs.priors = designate_priors(&cs.faces, &cs.segment_faces);
    cs
}

/// Mean x of a roof face's outline.
fn face_x(cs: &CandidateSet, f: usize) -> f64 {
    let p = &cs.faces[f].polygon;
    p.iter().map(|q| q.x).sum::<f64>() / p.len() as f64
}

/// Two roof layers over a 16 × 10 m footprint: the block roof at 7 m covers x < 9, the porch
/// roof at 4 m covers x > 10, and the strip 9 < x < 10 carries equally many points on both
/// layers (a semi-transparent overhang). Walls at x = 9 and x = 10 split the cells.
pub struct OverhangFixture {
    pub candidates: CandidateSet,
    pub total_points: usize,
    /// Strip faces of the upper and lower layer.
    pub upper: usize,
    pub lower: usize,
}

pub fn two_layer_overhang(strip_support: usize) -> OverhangFixture {
    let (zg, hi, lo) = (0.0, 7.0, 4.0);
    let walls = VerticalPlaneSet {
        planes: [9.0, 10.0].iter().map(|&x| VerticalPlane::from_trace(Point2::new(x, 0.0), Point2::new(x, 10.0), WallTag::Inner, zg, hi).expect("wall")).collect(),
        ..Default::default()
    };
    // The upper plane comes first so its faces get the lower ids.
    let cs = build_arrangement(&[roof(Plane::horizontal(hi)), roof(Plane::horizontal(lo))], &walls, &Polygon2::rectangle(0.0, 0.0, 16.0, 10.0), zg, hi, &HypothesisParams::default()).expect("arrangement");
    let mut cs = cs;
    let (mut upper, mut lower) = (None, None);
    for f in 0..cs.faces.len() {
        if cs.faces[f].kind != FaceKind::Roof {
            continue;
        }
        let (x, z) = (face_x(&cs, f), cs.faces[f].centroid_z);
        let on_upper = (z - hi).abs() < 1e-9;
        cs.faces[f].support = match (x, on_upper) {
            (x, true) if x < 9.0 => 720,
            (x, false) if x > 10.0 => 480,
            (x, true) if x > 9.0 && x < 10.0 => {
                upper = Some(f);
                strip_support
            }
            (x, false) if x > 9.0 && x < 10.0 => {
                lower = Some(f);
                strip_support
            }
            _ => 0,
        };
    }
    OverhangFixture { candidates: finish(cs), total_points: 720 + 480 + 2 * strip_support, upper: upper.expect("upper strip face"), lower: lower.expect("lower strip face") }
}

/// Two near-coplanar roof segments over a 20 × 10 m footprint: a flat part at 6 m for x < 10
/// and a 0.03-slope part for x > 10. Each plane also explains most points of the other part
/// (the faces nearly coincide), so without priors one plane can absorb both parts.
pub struct NearCoplanarFixture {
    pub candidates: CandidateSet,
    pub total_points: usize,
    pub flat: usize,
    pub sloped: usize,
}

pub fn near_coplanar_segments() -> NearCoplanarFixture {
    let flat = Plane::horizontal(6.0);
    let sloped = Plane::from_point_normal(Point3::new(10.0, 0.0, 6.0), Vector3::new(-0.03, 0.0, 1.0)).expect("plane");
    let cs = build_arrangement(&[roof(flat), roof(sloped)], &VerticalPlaneSet::default(), &Polygon2::rectangle(0.0, 0.0, 20.0, 10.0), 0.0, 6.3, &HypothesisParams::default()).expect("arrangement");
    let mut cs = cs;
    for f in 0..cs.faces.len() {
        if cs.faces[f].kind != FaceKind::Roof {
            continue;
        }
        let left = face_x(&cs, f) < 10.0;
        let seg = match cs.faces[f].source {
            FaceSource::Roof(s) => s,
            _ => unreachable!(),
        };
        // Own part: 800 points; the other part: 790 within tolerance of this plane.
        cs.faces[f].support = if left == (seg == 0) { 800 } else { 790 };
    }
    NearCoplanarFixture { candidates: finish(cs), total_points: 1600, flat: 0, sloped: 1 }
}
