//! Face attributes used by selection: point support, vertical-overlap groups and priors.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;

use super::overlap::overlap_area;
use super::{CandidateFace, CandidateSet, FaceKind, FaceSource};
use crate::ingest::PointCloud;
use crate::{Point2, Point3, Vector3};

/// Orthonormal in-plane axes for a unit normal.
fn frame(n: Vector3) -> (Vector3, Vector3) {
    let helper = if n.x.abs() < 0.9 { Vector3::new(1.0, 0.0, 0.0) } else { Vector3::new(0.0, 1.0, 0.0) };
    let u = n.cross(helper).normalized();
    (u, n.cross(u))
}

fn ring_contains(ring: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if crate::geom::point_segment_distance(p, a, b) <= 1e-9 {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
            inside = !inside;
        }
    }
    inside
}

/// Counts, per face, the points within `dist_tol` of its plane whose projection lies inside
/// the polygon and whose normal (when present) is within `angle_tol_deg` of the face normal.
pub fn compute_support(faces: &mut [CandidateFace], cloud: &PointCloud, dist_tol: f64, angle_tol_deg: f64) {
    let cos_tol = angle_tol_deg.to_radians().cos();
    faces.par_iter_mut().for_each(|f| {
        let n = f.plane.normal();
        let (u, v) = frame(n);
        let ring: Vec<Point2> = f.polygon.iter().map(|p| Point2::new(p.dot(u), p.dot(v))).collect();
        let (mut lo, mut hi) = (Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &f.polygon {
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let mut count = 0;
        for (i, &p) in cloud.points.iter().enumerate() {
            if p.x < lo.x - dist_tol || p.x > hi.x + dist_tol || p.y < lo.y - dist_tol || p.y > hi.y + dist_tol || p.z < lo.z - dist_tol || p.z > hi.z + dist_tol {
                continue;
            }
            if f.plane.distance(p) >= dist_tol {
                continue;
            }
            if let Some(normals) = &cloud.normals {
                if normals[i].dot(n).abs() < cos_tol {
                    continue;
                }
            }
            if ring_contains(&ring, Point2::new(p.dot(u), p.dot(v))) {
                count += 1;
            }
        }
        f.support = count;
    });
}

/// Per face, the roof faces whose vertical projections overlap it by more than `min_area`
/// (itself included). Walls and the ground get empty groups.
pub fn compute_vertical_groups(faces: &[CandidateFace], min_area: f64) -> Vec<Vec<usize>> {
    let proj: Vec<Vec<Point2>> = faces.iter().map(|f| f.polygon.iter().map(|p| p.xy()).collect()).collect();
    let roofs: Vec<usize> = faces.iter().filter(|f| f.kind == FaceKind::Roof).map(|f| f.id).collect();
    let mut groups = vec![Vec::new(); faces.len()];
    for &i in &roofs {
        groups[i].push(i);
    }
    for (a, &i) in roofs.iter().enumerate() {
        for &j in &roofs[a + 1..] {
            if overlap_area(&proj[i], &proj[j]) > min_area {
                groups[i].push(j);
                groups[j].push(i);
            }
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Prior face per roof segment: maximum support, then larger area, then lower id.
pub fn designate_priors(faces: &[CandidateFace], segment_faces: &BTreeMap<usize, Vec<usize>>) -> BTreeMap<usize, usize> {
    segment_faces
        .iter()
        .filter_map(|(&s, fs)| {
            fs.iter()
                .copied()
                .max_by(|&a, &b| {
                    let (fa, fb) = (&faces[a], &faces[b]);
                    fa.support.cmp(&fb.support).then(fa.area.total_cmp(&fb.area)).then(b.cmp(&a))
                })
                .map(|f| (s, f))
        })
        .collect()
}

/// Writes all candidates as OBJ with one group per source.
pub fn write_candidates_obj<W: Write>(cs: &CandidateSet, mut w: W) -> io::Result<()> {
    for v in &cs.vertices {
        writeln!(w, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z)?;
    }
    let mut by_source: BTreeMap<FaceSource, Vec<usize>> = BTreeMap::new();
    for f in &cs.faces {
        by_source.entry(f.source).or_default().push(f.id);
    }
    for (src, fs) in by_source {
        let name = match src {
            FaceSource::Roof(s) => format!("roof_{s}"),
            FaceSource::Wall(t) => format!("wall_{t}"),
            FaceSource::Ground => "ground".to_string(),
        };
        writeln!(w, "g {name}")?;
        for f in fs {
            let idx: Vec<String> = cs.faces[f].vertices.iter().map(|i| (i + 1).to_string()).collect();
            writeln!(w, "f {}", idx.join(" "))?;
        }
    }
    Ok(())
}
