//! Model quality: point-to-surface RMSE, mesh validity and per-building reports.

use std::collections::BTreeMap;

use rstar::{PointDistance, RTree, RTreeObject, AABB};
use serde::{Deserialize, Serialize};

use crate::geom::edge_key;
use crate::select::SolveStatus;
use crate::wall_infer::OuterSource;
use crate::{Point3, SurfaceMesh};

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(ap), ac.dot(ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(bp), ac.dot(bp));
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(cp), ac.dot(cp));
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Clone, Copy)]
struct Tri([Point3; 3]);

impl RTreeObject for Tri {
    type Envelope = AABB<[f64; 3]>;

    fn envelope(&self) -> Self::Envelope {
        let [a, b, c] = self.0;
        AABB::from_corners([a.x.min(b.x).min(c.x), a.y.min(b.y).min(c.y), a.z.min(b.z).min(c.z)], [a.x.max(b.x).max(c.x), a.y.max(b.y).max(c.y), a.z.max(b.z).max(c.z)])
    }
}

impl PointDistance for Tri {
    fn distance_2(&self, p: &[f64; 3]) -> f64 {
        let q = Point3::from_array(*p);
        let [a, b, c] = self.0;
        closest_point_on_triangle(q, a, b, c).distance(q).powi(2)
    }
}

fn mesh_triangles(mesh: &SurfaceMesh) -> Vec<Tri> {
    mesh.triangles().into_iter().map(|t| Tri([mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]])).collect()
}

/// Root mean square of point-to-surface distances, using a spatial index over the fan
/// triangles of every face.
pub fn rmse(points: &[Point3], mesh: &SurfaceMesh) -> f64 {
    let tree = RTree::bulk_load(mesh_triangles(mesh));
    if points.is_empty() || tree.size() == 0 {
        return 0.0;
    }
    let sum: f64 = points.iter().map(|p| tree.nearest_neighbor(&p.to_array()).map_or(f64::INFINITY, |t| t.distance_2(&p.to_array()))).sum();
    (sum / points.len() as f64).sqrt()
}

/// Same as [`rmse`] by exhaustive search over all triangles.
pub fn rmse_brute_force(points: &[Point3], mesh: &SurfaceMesh) -> f64 {
    let tris = mesh_triangles(mesh);
    if points.is_empty() || tris.is_empty() {
        return 0.0;
    }
    let sum: f64 = points.iter().map(|p| tris.iter().map(|t| t.distance_2(&p.to_array())).fold(f64::INFINITY, f64::min)).sum();
    (sum / points.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Defect {
    /// Edge used by fewer or more than two faces.
    BadEdge { edge: (usize, usize), faces: usize },
    /// Both faces traverse a shared edge in the same direction.
    OrientationConflict { edge: (usize, usize) },
    DuplicateFace { a: usize, b: usize },
    DegenerateFace { face: usize },
    NonPositiveVolume { volume: f64 },
}

/// Checks watertightness, 2-manifoldness, orientation consistency, duplicates and volume.
pub fn validate_mesh(mesh: &SurfaceMesh) -> Vec<Defect> {
    let mut defects = Vec::new();
    let mut directed: BTreeMap<(usize, usize), Vec<(usize, bool)>> = BTreeMap::new();
    for (f, r) in mesh.faces.iter().enumerate() {
        let mut uniq = r.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if r.len() < 3 || uniq.len() != r.len() || r.iter().any(|&v| v >= mesh.vertices.len()) {
            defects.push(Defect::DegenerateFace { face: f });
            continue;
        }
        for k in 0..r.len() {
            let (a, b) = (r[k], r[(k + 1) % r.len()]);
            directed.entry(edge_key(a, b)).or_default().push((f, a < b));
        }
    }
    for (&edge, uses) in &directed {
        if uses.len() != 2 {
            defects.push(Defect::BadEdge { edge, faces: uses.len() });
        } else if uses[0].1 == uses[1].1 {
            defects.push(Defect::OrientationConflict { edge });
        }
    }
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (f, r) in mesh.faces.iter().enumerate() {
        let mut key = r.clone();
        key.sort_unstable();
        if let Some(&g) = seen.get(&key) {
            defects.push(Defect::DuplicateFace { a: g, b: f });
        } else {
            seen.insert(key, f);
        }
    }
    let volume = mesh.signed_volume();
    if !(volume > 0.0) {
        defects.push(Defect::NonPositiveVolume { volume });
    }
    defects
}

/// Seconds spent per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub planes: f64,
    pub walls: f64,
    pub hypothesis: f64,
    pub selection: f64,
    pub extraction: f64,
    pub evaluation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildingStatus {
    Optimal,
    /// Solver hit its time limit; the model is the best incumbent.
    Approximate,
    Failed,
}

impl From<SolveStatus> for BuildingStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => BuildingStatus::Optimal,
            SolveStatus::Timeout => BuildingStatus::Approximate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingReport {
    pub id: String,
    pub points: usize,
    pub faces: usize,
    pub rmse: Option<f64>,
    pub status: BuildingStatus,
    pub wall_source: Option<OuterSource>,
    pub timings: StageTimings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_variables: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_nodes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_priors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BuildingReport {
    pub fn failed(id: &str, points: usize, error: String) -> Self {
        Self {
            id: id.to_string(),
            points,
            faces: 0,
            rmse: None,
            status: BuildingStatus::Failed,
            wall_source: None,
            timings: StageTimings::default(),
            candidates: None,
            free_variables: None,
            solver_nodes: None,
            objective: None,
            dropped_priors: Vec::new(),
            error: Some(error),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status != BuildingStatus::Failed
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub buildings: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub approximate: usize,
    pub mean_faces: f64,
    pub rmse_min: f64,
    pub rmse_max: f64,
    pub rmse_mean: f64,
    pub total_time: f64,
}

/// Aggregates over successful reports; failures are only counted.
pub fn summarize(reports: &[BuildingReport]) -> Summary {
    let ok: Vec<&BuildingReport> = reports.iter().filter(|r| r.succeeded()).collect();
    let rm: Vec<f64> = ok.iter().filter_map(|r| r.rmse).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let faces: Vec<f64> = ok.iter().map(|r| r.faces as f64).collect();
    Summary {
        buildings: reports.len(),
        succeeded: ok.len(),
        failed: reports.len() - ok.len(),
        approximate: ok.iter().filter(|r| r.status == BuildingStatus::Approximate).count(),
        mean_faces: mean(&faces),
        rmse_min: rm.iter().copied().fold(f64::INFINITY, f64::min).min(if rm.is_empty() { 0.0 } else { f64::INFINITY }),
        rmse_max: rm.iter().copied().fold(if rm.is_empty() { 0.0 } else { f64::NEG_INFINITY }, f64::max),
        rmse_mean: mean(&rm),
        total_time: reports.iter().map(|r| r.timings.total).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::box_mesh;
    use rand::{Rng, SeedableRng};

    fn cube() -> SurfaceMesh {
        box_mesh(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn points_on_mesh_have_zero_rmse() {
        let m = cube();
        let pts: Vec<Point3> = (0..50).map(|i| Point3::new(0.02 * i as f64, 0.3, 1.0)).collect();
        assert!(rmse(&pts, &m) < 1e-9);
    }

    #[test]
    fn constant_height_offset() {
        let m = cube();
        let pts: Vec<Point3> = (0..20).map(|i| Point3::new(0.2 + 0.03 * i as f64, 0.5, 1.3)).collect();
        assert!((rmse(&pts, &m) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn indexed_matches_exhaustive_search() {
        let m = cube();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..1000).map(|_| Point3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0))).collect();
        // Oracle: distance to an axis-aligned box surface computed analytically.
        let exact = |p: Point3| {
            let inside = (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y) && (0.0..=1.0).contains(&p.z);
            if inside {
                [p.x, 1.0 - p.x, p.y, 1.0 - p.y, p.z, 1.0 - p.z].into_iter().fold(f64::INFINITY, f64::min)
            } else {
                let d = |v: f64| (-v).max(v - 1.0).max(0.0);
                (d(p.x).powi(2) + d(p.y).powi(2) + d(p.z).powi(2)).sqrt()
            }
        };
        let oracle = (pts.iter().map(|&p| exact(p).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
        assert!((rmse(&pts, &m) - oracle).abs() < 1e-9);
        assert!((rmse_brute_force(&pts, &m) - oracle).abs() < 1e-9);
    }

    #[test]
    fn rmse_is_rigid_motion_invariant() {
        let m = cube();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = (0..200).map(|_| Point3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5))).collect();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let tf = |p: Point3| Point3::new(c * p.x - s * p.y + 100.0, s * p.x + c * p.y - 40.0, p.z + 3.0);
        let m2 = SurfaceMesh::new(m.vertices.iter().map(|&p| tf(p)).collect(), m.faces.clone());
        let p2: Vec<Point3> = pts.iter().map(|&p| tf(p)).collect();
        assert!((rmse(&pts, &m) - rmse(&p2, &m2)).abs() < 1e-9);
    }

    #[test]
    fn cube_defects() {
        assert!(validate_mesh(&cube()).is_empty());
        let mut open = cube();
        open.faces.pop();
        let bad = validate_mesh(&open).iter().filter(|d| matches!(d, Defect::BadEdge { faces: 1, .. })).count();
        assert_eq!(bad, 4);
        let mut flipped = cube();
        flipped.faces[0].reverse();
        let d = validate_mesh(&flipped);
        // Oracle: half-edges of the flipped face now coincide with its neighbours' half-edges.
        let mut half: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for r in &flipped.faces {
            for k in 0..r.len() {
                *half.entry((r[k], r[(k + 1) % r.len()])).or_default() += 1;
            }
        }
        let expected = half.values().filter(|&&c| c == 2).count();
        assert_eq!(expected, 4);
        assert_eq!(d.iter().filter(|x| matches!(x, Defect::OrientationConflict { .. })).count(), expected);
    }

    fn report(rmse: f64, faces: usize, t: f64) -> BuildingReport {
        BuildingReport {
            rmse: Some(rmse),
            faces,
            status: BuildingStatus::Optimal,
            timings: StageTimings { total: t, ..Default::default() },
            ..BuildingReport::failed("b", 10, String::new())
        }
    }

    #[test]
    fn summaries() {
        let one = summarize(&[report(0.1, 12, 0.5)]);
        assert_eq!((one.rmse_min, one.rmse_max, one.rmse_mean, one.mean_faces, one.total_time), (0.1, 0.1, 0.1, 12.0, 0.5));
        let two = summarize(&[report(0.1, 10, 1.0), report(0.3, 20, 2.0)]);
        assert_eq!((two.rmse_min, two.rmse_max), (0.1, 0.3));
        assert!((two.rmse_mean - 0.2).abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let many: Vec<BuildingReport> = (0..100).map(|_| report(rng.gen_range(0.0..0.3), rng.gen_range(6..60), rng.gen_range(0.0..2.0))).collect();
        let s = summarize(&many);
        let (mut lo, mut hi, mut sum, mut fsum, mut tsum) = (f64::MAX, f64::MIN, 0.0, 0.0, 0.0);
        for r in &many {
            let v = r.rmse.unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            fsum += r.faces as f64;
            tsum += r.timings.total;
        }
        assert_eq!((s.rmse_min, s.rmse_max), (lo, hi));
        assert!((s.rmse_mean - sum / 100.0).abs() < 1e-12 && (s.mean_faces - fsum / 100.0).abs() < 1e-12 && (s.total_time - tsum).abs() < 1e-9);
    }

    #[test]
    fn report_round_trips_as_ndjson() {
        let r = report(0.12, 9, 0.3);
        let line = r.to_ndjson_line();
        assert!(!line.contains('\n'));
        let back: BuildingReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
