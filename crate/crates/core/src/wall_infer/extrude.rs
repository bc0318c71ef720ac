//! Outer boundary recovery and extrusion of wall traces to vertical planes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::polyline::PolylineSet;
use crate::geom::{ring_is_simple, ring_signed_area};
use crate::{Plane, Point2, Polygon2, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallTag {
    Outer,
    Inner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalPlane {
    pub plane: Plane,
    pub trace: (Point2, Point2),
    pub tag: WallTag,
    pub z_ground: f64,
    pub z_max: f64,
}

impl VerticalPlane {
    pub fn from_trace(a: Point2, b: Point2, tag: WallTag, z_ground: f64, z_max: f64) -> Option<Self> {
        let d = b - a;
        if d.norm() <= 0.0 {
            return None;
        }
        let n = d.perp();
        let plane = Plane::from_point_normal(a.with_z(z_ground), Vector3::new(n.x, n.y, 0.0)).ok()?;
        Some(Self { plane, trace: (a, b), tag, z_ground, z_max })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerticalPlaneSet {
    pub planes: Vec<VerticalPlane>,
    /// Inferred traces replaced by footprint planes.
    pub suppressed: usize,
    /// Inferred traces lying outside the outer boundary.
    pub outside: usize,
}

impl VerticalPlaneSet {
    pub fn outer(&self) -> impl Iterator<Item = &VerticalPlane> {
        self.planes.iter().filter(|p| p.tag == WallTag::Outer)
    }

    pub fn inner(&self) -> impl Iterator<Item = &VerticalPlane> {
        self.planes.iter().filter(|p| p.tag == WallTag::Inner)
    }
}

/// Largest distance from sample points of a trace (ends and midpoint) to the ring.
fn trace_distance(a: Point2, b: Point2, boundary: &Polygon2) -> f64 {
    [a, b, (a + b) * 0.5].iter().map(|&p| boundary.boundary_distance(p)).fold(0.0, f64::max)
}

/// Turns regularized traces into vertical planes.
///
/// Traces within `1.5·r` of the boundary are outer walls. With `footprint_walls`, every
/// boundary edge yields an outer plane and such traces are suppressed instead. Traces
/// farther away are inner walls when their midpoint lies inside the boundary.
pub fn extrude(pl: &PolylineSet, boundary: &Polygon2, footprint_walls: bool, r: f64, z_ground: f64, z_max: f64) -> VerticalPlaneSet {
    let mut out = VerticalPlaneSet::default();
    let near = 1.5 * r;
    if footprint_walls {
        for (a, b) in boundary.edges() {
            out.planes.extend(VerticalPlane::from_trace(a, b, WallTag::Outer, z_ground, z_max));
        }
    }
    for (a, b) in pl.segments() {
        let tag = if trace_distance(a, b, boundary) <= near {
            if footprint_walls {
                out.suppressed += 1;
                continue;
            }
            WallTag::Outer
        } else if boundary.contains((a + b) * 0.5) {
            WallTag::Inner
        } else {
            out.outside += 1;
            continue;
        };
        out.planes.extend(VerticalPlane::from_trace(a, b, tag, z_ground, z_max));
    }
    out
}

/// Outer boundary of a polyline network: dangling chains are pruned, then the outer face of
/// the remaining graph is traced by always taking the rightmost turn. A non-simple trace is
/// split at repeated vertices and the largest loop kept.
pub fn outer_loop(pl: &PolylineSet) -> Option<Polygon2> {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut verts: Vec<Point2> = Vec::new();
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut vid = |p: Point2, verts: &mut Vec<Point2>, adj: &mut Vec<Vec<usize>>| {
        *index.entry(((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())).or_insert_with(|| {
            verts.push(p);
            adj.push(Vec::new());
            verts.len() - 1
        })
    };
    for (a, b) in pl.segments() {
        let (i, j) = (vid(a, &mut verts, &mut adj), vid(b, &mut verts, &mut adj));
        if i != j && !adj[i].contains(&j) {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    // 2-core.
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..verts.len() {
            if adj[v].len() == 1 {
                let w = adj[v].pop().unwrap();
                adj[w].retain(|&x| x != v);
                changed = true;
            }
        }
    }
    let start = (0..verts.len())
        .filter(|&v| !adj[v].is_empty())
        .min_by(|&a, &b| verts[a].x.total_cmp(&verts[b].x).then(verts[a].y.total_cmp(&verts[b].y)))?;

    let ccw = |from: Point2, to: Point2| {
        let a = to.y.atan2(to.x) - from.y.atan2(from.x);
        let tau = std::f64::consts::TAU;
        let a = a.rem_euclid(tau);
        if a <= 1e-12 {
            tau
        } else {
            a
        }
    };
    let next = |v: usize, back: Point2| -> usize {
        *adj[v].iter().min_by(|&&x, &&y| ccw(back, verts[x] - verts[v]).total_cmp(&ccw(back, verts[y] - verts[v])).then(x.cmp(&y))).unwrap()
    };
    let first = next(start, Point2::new(-1.0, 0.0));
    let mut ring = vec![start];
    let (mut prev, mut cur) = (start, first);
    let limit = 4 * pl.segment_count() + 8;
    loop {
        if ring.len() > limit {
            return None;
        }
        let nxt = next(cur, verts[prev] - verts[cur]);
        if cur == start && nxt == first {
            break;
        }
        ring.push(cur);
        prev = cur;
        cur = nxt;
    }

    // Split at repeated vertices; keep the loop of largest area.
    let mut best: Option<Vec<Point2>> = None;
    let mut stack: Vec<usize> = Vec::new();
    let mut loops: Vec<Vec<usize>> = Vec::new();
    for &v in &ring {
        if let Some(pos) = stack.iter().position(|&x| x == v) {
            loops.push(stack.split_off(pos));
        }
        stack.push(v);
    }
    loops.push(stack);
    for l in loops {
        if l.len() < 3 {
            continue;
        }
        let pts: Vec<Point2> = l.iter().map(|&i| verts[i]).collect();
        let area = ring_signed_area(&pts).abs();
        if best.as_ref().map_or(true, |b| area > ring_signed_area(b).abs()) {
            best = Some(pts);
        }
    }
    let best = best?;
    if !ring_is_simple(&best) {
        return None;
    }
    Polygon2::new(best, vec![]).ok()
}
