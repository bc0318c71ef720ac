//! Intersection area of simple polygons via ear-clipping and convex clipping.

use crate::geom::ring_signed_area;
use crate::Point2;

/// Ear-clipping triangulation of a simple ring (either orientation); triangles are CCW.
pub fn triangulate(ring: &[Point2]) -> Vec<[Point2; 3]> {
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    if ring_signed_area(ring) < 0.0 {
        idx.reverse();
    }
    let mut tris = Vec::new();
    let cross = |a: Point2, b: Point2, c: Point2| (b - a).cross(c - a);
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (i0, i1, i2) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (ring[i0], ring[i1], ring[i2]);
            let turn = cross(a, b, c);
            if turn.abs() <= 1e-14 * (b - a).norm() * (c - b).norm() {
                // Collinear vertex: drop it without emitting a triangle.
                idx.remove(k);
                clipped = true;
                break;
            }
            if turn < 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                if j == i0 || j == i1 || j == i2 {
                    return false;
                }
                let p = ring[j];
                if p == a || p == b || p == c {
                    return false;
                }
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                tris.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Numerically stuck; clip the most convex vertex.
            let k = (0..n)
                .max_by(|&x, &y| {
                    let t = |k: usize| cross(ring[idx[(k + n - 1) % n]], ring[idx[k]], ring[idx[(k + 1) % n]]);
                    t(x).total_cmp(&t(y))
                })
                .unwrap();
            tris.push([ring[idx[(k + n - 1) % n]], ring[idx[k]], ring[idx[(k + 1) % n]]]);
            idx.remove(k);
        }
    }
    if idx.len() == 3 {
        let t = [ring[idx[0]], ring[idx[1]], ring[idx[2]]];
        if cross(t[0], t[1], t[2]) > 0.0 {
            tris.push(t);
        }
    }
    tris
}

/// Sutherland–Hodgman clip of a convex CCW polygon by a convex CCW clipper.
fn clip_convex(subject: &[Point2], clipper: &[Point2]) -> Vec<Point2> {
    let mut out = subject.to_vec();
    for k in 0..clipper.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clipper[k], clipper[(k + 1) % clipper.len()]);
        let side = |p: Point2| (b - a).cross(p - a);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (p, q) = (input[i], input[(i + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push(p + (q - p) * t);
            }
        }
    }
    out
}

fn bounds(ring: &[Point2]) -> (Point2, Point2) {
    ring.iter().fold((ring[0], ring[0]), |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))))
}

/// Area of the intersection of two simple polygons.
pub fn overlap_area(p: &[Point2], q: &[Point2]) -> f64 {
    if p.len() < 3 || q.len() < 3 {
        return 0.0;
    }
    let ((plo, phi), (qlo, qhi)) = (bounds(p), bounds(q));
    if plo.x >= qhi.x || qlo.x >= phi.x || plo.y >= qhi.y || qlo.y >= phi.y {
        return 0.0;
    }
    let (tp, tq) = (triangulate(p), triangulate(q));
    let mut area = 0.0;
    for a in &tp {
        for b in &tq {
            let c = clip_convex(a, b);
            if c.len() >= 3 {
                area += ring_signed_area(&c).max(0.0);
            }
        }
    }
    area
}
