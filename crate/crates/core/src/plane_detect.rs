//! Normal estimation and region-growing extraction of planar segments.

use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{fit_plane, symmetric_eigen3};
use crate::ingest::PointCloud;
use crate::{Plane, Point3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Roof,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarSegment {
    /// Indices into the building cloud, ascending.
    pub inliers: Vec<usize>,
    pub plane: Plane,
    pub kind: SegmentKind,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrowParams {
    pub k: usize,
    pub angle_tol_deg: f64,
    /// `None` derives the tolerance as 2.5 × the median nearest-neighbor spacing.
    pub dist_tol: Option<f64>,
    pub min_support: usize,
    pub vertical_angle_tol_deg: f64,
}

impl Default for RegionGrowParams {
    fn default() -> Self {
        Self { k: 16, angle_tol_deg: 20.0, dist_tol: None, min_support: 10, vertical_angle_tol_deg: 10.0 }
    }
}

type IndexedPoint = GeomWithData<[f64; 3], usize>;

fn build_tree(points: &[Point3]) -> RTree<IndexedPoint> {
    RTree::bulk_load(points.iter().enumerate().map(|(i, p)| GeomWithData::new([p.x, p.y, p.z], i)).collect())
}

/// The `k` nearest neighbors of every point (excluding itself), nearest first.
pub fn knn_indices(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    let tree = build_tree(points);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut found: Vec<(f64, usize)> = tree
                .nearest_neighbor_iter_with_distance_2(&[p.x, p.y, p.z])
                .filter(|(g, _)| g.data != i)
                .take(k + 8)
                .map(|(g, d)| (d, g.data))
                .collect();
            // Equal distances resolve by index so results do not depend on tree layout.
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            found.truncate(k);
            found.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Median distance from a point to its nearest neighbor.
pub fn estimate_spacing(points: &[Point3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let nn = knn_indices(points, 1);
    let d: Vec<f64> = nn.iter().enumerate().map(|(i, n)| points[i].distance(points[n[0]])).collect();
    crate::ingest::quantile(&d, 0.5).unwrap_or(0.0)
}

/// Orients a normal upward; horizontal normals take the sign of their first
/// non-zero component.
pub fn orient_up(n: Vector3) -> Vector3 {
    const EPS: f64 = 1e-12;
    let flip = if n.z.abs() > EPS {
        n.z < 0.0
    } else if n.x.abs() > EPS {
        n.x < 0.0
    } else {
        n.y < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

fn local_normal(points: &[Point3], center: usize, nbrs: &[usize]) -> Vector3 {
    let idx = std::iter::once(center).chain(nbrs.iter().copied());
    let n = (nbrs.len() + 1) as f64;
    let mut c = Point3::zero();
    for i in idx.clone() {
        c += points[i];
    }
    let c = c / n;
    let mut m = [[0.0; 3]; 3];
    for i in idx {
        let q = (points[i] - c).to_array();
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += q[a] * q[b];
            }
        }
    }
    let (_, vecs) = symmetric_eigen3(m);
    orient_up(Point3::from_array(vecs[0]).normalized())
}

/// Smallest-eigenvalue direction of each point's k-NN covariance, oriented upward.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 || cloud.len() < k {
        return Err(Error::TooFewPoints(format!("{} points for k = {}", cloud.len(), k)));
    }
    let knn = knn_indices(&cloud.points, k);
    Ok(with_normals(cloud, &knn))
}

fn with_normals(cloud: &PointCloud, knn: &[Vec<usize>]) -> PointCloud {
    let normals = (0..cloud.len()).into_par_iter().map(|i| local_normal(&cloud.points, i, &knn[i])).collect();
    PointCloud { normals: Some(normals), ..cloud.clone() }
}

fn unoriented_angle(a: Vector3, b: Vector3) -> f64 {
    a.dot(b).abs().min(1.0).acos()
}

/// Average angular deviation of the normals in a point's neighborhood from their mean.
fn normal_variation(normals: &[Vector3], i: usize, nbrs: &[usize]) -> f64 {
    let ni = normals[i];
    let mut mean = ni;
    for &j in nbrs {
        let nj = normals[j];
        mean += if nj.dot(ni) < 0.0 { -nj } else { nj };
    }
    let len = mean.norm();
    if len == 0.0 {
        return std::f64::consts::PI;
    }
    let mean = mean / len;
    let total: f64 = std::iter::once(i).chain(nbrs.iter().copied()).map(|j| unoriented_angle(normals[j], mean)).sum();
    total / (nbrs.len() + 1) as f64
}

/// Running moments for cheap plane refits during growth.
struct Moments {
    origin: Point3,
    n: f64,
    s: [f64; 3],
    ss: [[f64; 3]; 3],
}

impl Moments {
    fn new(origin: Point3) -> Self {
        Self { origin, n: 0.0, s: [0.0; 3], ss: [[0.0; 3]; 3] }
    }

    fn add(&mut self, p: Point3) {
        let q = (p - self.origin).to_array();
        self.n += 1.0;
        for a in 0..3 {
            self.s[a] += q[a];
            for b in 0..3 {
                self.ss[a][b] += q[a] * q[b];
            }
        }
    }

    fn plane(&self) -> Option<Plane> {
        let c = [self.s[0] / self.n, self.s[1] / self.n, self.s[2] / self.n];
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = self.ss[a][b] / self.n - c[a] * c[b];
            }
        }
        let (vals, vecs) = symmetric_eigen3(m);
        if vals[1] <= 1e-18 {
            return None;
        }
        Plane::from_point_normal(self.origin + Point3::from_array(c), Point3::from_array(vecs[0])).ok()
    }
}

const UNASSIGNED: usize = usize::MAX;

/// Region growing over a cloud that already carries normals.
///
/// `knn` gives each point's neighborhood (as from [`knn_indices`]).
pub fn region_grow_with_knn(
    cloud: &PointCloud,
    knn: &[Vec<usize>],
    angle_tol_deg: f64,
    dist_tol: f64,
    min_support: usize,
) -> Vec<PlanarSegment> {
    let Some(normals) = cloud.normals.as_ref() else {
        return Vec::new();
    };
    let pts = &cloud.points;
    let n = pts.len();
    let angle_tol = angle_tol_deg.to_radians();

    let variation: Vec<f64> = (0..n).into_par_iter().map(|i| normal_variation(normals, i, &knn[i])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| variation[a].total_cmp(&variation[b]).then(a.cmp(&b)));

    let mut label = vec![UNASSIGNED; n];
    let mut seeded = vec![false; n];
    let mut segments = Vec::new();
    for &seed in &order {
        if label[seed] != UNASSIGNED || seeded[seed] {
            continue;
        }
        seeded[seed] = true;
        let region_id = segments.len();
        let seed_normal = normals[seed];
        let mut plane = match Plane::from_point_normal(pts[seed], seed_normal) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let mut moments = Moments::new(pts[seed]);
        moments.add(pts[seed]);
        let mut members = vec![seed];
        let mut next_refit = 3usize;
        label[seed] = region_id;
        let mut head = 0;
        while head < members.len() {
            let m = members[head];
            head += 1;
            for &q in &knn[m] {
                if label[q] != UNASSIGNED {
                    continue;
                }
                if unoriented_angle(normals[q], seed_normal) >= angle_tol || plane.distance(pts[q]) >= dist_tol {
                    continue;
                }
                label[q] = region_id;
                members.push(q);
                moments.add(pts[q]);
                if members.len() >= next_refit {
                    if let Some(p) = moments.plane() {
                        plane = p;
                    }
                    next_refit = members.len() + (members.len() / 10).max(1);
                }
            }
        }
        let release = |label: &mut Vec<usize>, members: &[usize]| {
            for &m in members {
                label[m] = UNASSIGNED;
            }
        };
        if members.len() < min_support {
            release(&mut label, &members);
            for &m in &members {
                seeded[m] = true;
            }
            continue;
        }
        let member_pts: Vec<Point3> = members.iter().map(|&i| pts[i]).collect();
        let Ok(fitted) = fit_plane(&member_pts) else {
            release(&mut label, &members);
            continue;
        };
        let (keep, drop): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| fitted.distance(pts[i]) < dist_tol);
        release(&mut label, &drop);
        if keep.len() < min_support {
            release(&mut label, &keep);
            continue;
        }
        let mut inliers = keep;
        inliers.sort_unstable();
        segments.push(PlanarSegment { support: inliers.len(), inliers, plane: fitted, kind: SegmentKind::Roof });
    }
    segments.sort_by(|a, b| b.support.cmp(&a.support).then(a.inliers[0].cmp(&b.inliers[0])));
    segments
}

/// Region growing with neighborhoods of size `k` computed internally.
pub fn region_grow(cloud: &PointCloud, k: usize, angle_tol_deg: f64, dist_tol: f64, min_support: usize) -> Vec<PlanarSegment> {
    let knn = knn_indices(&cloud.points, k.min(cloud.len().saturating_sub(1)));
    region_grow_with_knn(cloud, &knn, angle_tol_deg, dist_tol, min_support)
}

/// Vertical iff the normal is at least `90° − vertical_angle_tol` away from the z-axis.
pub fn classify_segments(mut segments: Vec<PlanarSegment>, vertical_angle_tol_deg: f64) -> Vec<PlanarSegment> {
    for s in &mut segments {
        s.kind = classify_plane(&s.plane, vertical_angle_tol_deg);
    }
    segments
}

pub fn classify_plane(plane: &Plane, vertical_angle_tol_deg: f64) -> SegmentKind {
    let from_z = plane.normal().z.abs().min(1.0).acos().to_degrees();
    if from_z >= 90.0 - vertical_angle_tol_deg - 1e-9 {
        SegmentKind::Vertical
    } else {
        SegmentKind::Roof
    }
}

/// Output of [`detect_planes`].
#[derive(Debug, Clone)]
pub struct Detection {
    pub cloud: PointCloud,
    pub segments: Vec<PlanarSegment>,
    pub dist_tol: f64,
    pub spacing: f64,
}

/// Normals, region growing and classification with one shared neighborhood graph.
pub fn detect_planes(cloud: &PointCloud, params: &RegionGrowParams) -> Result<Detection> {
    if cloud.len() <= params.k || params.k < 3 {
        return Err(Error::TooFewPoints(format!("{} points for k = {}", cloud.len(), params.k)));
    }
    let knn = knn_indices(&cloud.points, params.k);
    let spacing = {
        let d: Vec<f64> = knn.iter().enumerate().map(|(i, n)| cloud.points[i].distance(cloud.points[n[0]])).collect();
        crate::ingest::quantile(&d, 0.5).unwrap_or(0.0)
    };
    let dist_tol = params.dist_tol.unwrap_or(2.5 * spacing).max(1e-6);
    let with_n = if cloud.normals.is_some() { cloud.clone() } else { with_normals(cloud, &knn) };
    let segments = region_grow_with_knn(&with_n, &knn, params.angle_tol_deg, dist_tol, params.min_support);
    let segments = classify_segments(segments, params.vertical_angle_tol_deg);
    Ok(Detection { cloud: with_n, segments, dist_tol, spacing })
}
