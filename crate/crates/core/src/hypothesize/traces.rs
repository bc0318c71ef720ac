//! 2D traces that subdivide the roof planes: boundary edges, consolidated inner walls and
//! roof–roof intersection lines clipped to the building.

use serde::{Deserialize, Serialize};

use crate::geom::{intersect_two_planes, point_segment_distance};
use crate::{Plane, Point2, Polygon2, Vector2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Boundary,
    InnerWall,
    RoofIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub a: Point2,
    pub b: Point2,
    pub kind: TraceKind,
}

impl Trace {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    fn dir(&self) -> Vector2 {
        (self.b - self.a).normalized()
    }
}

/// Parameter intervals of the line `o + t·d` lying inside the polygon's outer ring.
pub fn line_inside_intervals(o: Point2, d: Vector2, ring: &[Point2]) -> Vec<(f64, f64)> {
    let n = ring.len();
    let mut ts = Vec::new();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let e = b - a;
        let den = d.cross(e);
        if den.abs() < 1e-12 {
            continue;
        }
        let u = (a - o).cross(d) / den;
        if (-1e-12..=1.0 + 1e-12).contains(&u) {
            ts.push((a - o).cross(e) / den);
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    let poly = Polygon2::new(ring.to_vec(), vec![]).ok();
    let mut out = Vec::new();
    for w in ts.windows(2) {
        let mid = o + d * (0.5 * (w[0] + w[1]));
        if poly.as_ref().map_or(false, |p| p.contains(mid)) && w[1] - w[0] > 1e-9 {
            out.push((w[0], w[1]));
        }
    }
    out
}

fn intersect_intervals(a: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    a.iter().filter_map(|&(s, e)| {
        let (s, e) = (s.max(lo), e.min(hi));
        (e > s).then_some((s, e))
    }).collect()
}

/// True when `t` nearly duplicates an existing trace (almost parallel, within `tol` of its
/// line and overlapping it for most of its length). Such traces would only cut slivers.
fn near_duplicate(t: &Trace, existing: &[Trace], tol: f64) -> bool {
    let len = t.length();
    existing.iter().any(|s| {
        if s.length() <= 0.0 || t.dir().cross(s.dir()).abs() > 2f64.to_radians().sin() {
            return false;
        }
        let n = s.dir().perp();
        if n.dot(t.a - s.a).abs() > tol || n.dot(t.b - s.a).abs() > tol {
            return false;
        }
        let (ta, tb) = (s.dir().dot(t.a - s.a), s.dir().dot(t.b - s.a));
        let overlap = ta.max(tb).min(s.length()) - ta.min(tb).max(0.0);
        overlap >= 0.5 * len
    })
}

/// Intersection traces of every pair of roof planes: the part of each 2D line inside the
/// boundary where the common line's height lies within `[z_lo, z_hi]`.
pub fn roof_intersections(planes: &[Plane], ring: &[Point2], z_lo: f64, z_hi: f64, existing: &[Trace], sliver_tol: f64) -> Vec<Trace> {
    let mut out: Vec<Trace> = Vec::new();
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            let Some((p, dir)) = intersect_two_planes(&planes[i], &planes[j]) else { continue };
            let h = Vector2::new(dir.x, dir.y);
            let hn = h.norm();
            if hn < 1e-6 {
                continue;
            }
            let d = h / hn;
            let o = Point2::new(p.x, p.y);
            // Height along the 2D parameter t: z(t) = p.z + t·slope.
            let slope = dir.z / hn;
            let (lo, hi) = if slope.abs() < 1e-12 {
                if p.z < z_lo || p.z > z_hi {
                    continue;
                }
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                let (t1, t2) = ((z_lo - p.z) / slope, (z_hi - p.z) / slope);
                (t1.min(t2), t1.max(t2))
            };
            for (s, e) in intersect_intervals(&line_inside_intervals(o, d, ring), lo, hi) {
                let t = Trace { a: o + d * s, b: o + d * e, kind: TraceKind::RoofIntersection };
                if t.length() < 1e-3 {
                    continue;
                }
                let mut known: Vec<Trace> = existing.to_vec();
                known.extend_from_slice(&out);
                if !near_duplicate(&t, &known, sliver_tol) {
                    out.push(t);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    /// Pieces on one line closer than this are joined (m).
    pub gap: f64,
    /// Consolidated traces shorter than this are dropped (m).
    pub min_length: f64,
    /// Free ends are extended up to this far to meet another trace (m).
    pub extend: f64,
    /// Lines within this offset and 2° are treated as one (m).
    pub merge_dist: f64,
}

impl Default for InnerParams {
    fn default() -> Self {
        Self { gap: 2.5, min_length: 1.0, extend: 3.0, merge_dist: 0.3 }
    }
}

/// Merges inner wall pieces lying on a common line, drops short leftovers, clips them to the
/// boundary and extends free ends to the nearest trace within reach.
pub fn consolidate_inner(raw: &[(Point2, Point2)], ring: &[Point2], others: &[Trace], params: &InnerParams) -> Vec<Trace> {
    let canon = |d: Vector2| if d.x < 0.0 || (d.x == 0.0 && d.y < 0.0) { -d } else { d };
    let mut order: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].0.distance(raw[i].1) > 1e-9).collect();
    // Longest first so each group's line comes from its best-supported piece.
    order.sort_by(|&x, &y| {
        let (lx, ly) = (raw[x].0.distance(raw[x].1), raw[y].0.distance(raw[y].1));
        ly.total_cmp(&lx).then(x.cmp(&y))
    });
    let mut groups: Vec<(Point2, Vector2, Vec<(f64, f64)>)> = Vec::new();
    for i in order {
        let (a, b) = raw[i];
        let d = canon((b - a).normalized());
        // Pieces join a group on (nearly) the same line; a piece that only continues the group
        // (no interval overlap) may sit up to twice as far off, which absorbs raster jogs.
        let found = groups.iter_mut().find(|(o, gd, iv)| {
            if gd.cross(d).abs() > 2f64.to_radians().sin() {
                return false;
            }
            let off = gd.perp().dot(a - *o).abs().max(gd.perp().dot(b - *o).abs());
            if off <= params.merge_dist {
                return true;
            }
            let (s, e) = (gd.dot(a - *o), gd.dot(b - *o));
            let (s, e) = (s.min(e), s.max(e));
            let overlap = iv.iter().map(|&(x, y)| (y.min(e) - x.max(s)).max(0.0)).fold(0.0, f64::max);
            off <= 2.0 * params.merge_dist && overlap <= 0.5
        });
        match found {
            Some((o, gd, iv)) => {
                let (s, e) = (gd.dot(a - *o), gd.dot(b - *o));
                iv.push((s.min(e), s.max(e)));
            }
            None => {
                let e = d.dot(b - a);
                groups.push((a, d, vec![(0.0f64.min(e), 0.0f64.max(e))]));
            }
        }
    }
    let mut traces: Vec<Trace> = Vec::new();
    for (o, d, mut iv) in groups {
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (s, e) in iv {
            match merged.last_mut() {
                Some(last) if s - last.1 <= params.gap => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        let inside = line_inside_intervals(o, d, ring);
        for (s, e) in merged {
            if e - s < params.min_length {
                continue;
            }
            for (cs, ce) in intersect_intervals(&inside, s, e) {
                if ce - cs >= params.min_length {
                    traces.push(Trace { a: o + d * cs, b: o + d * ce, kind: TraceKind::InnerWall });
                }
            }
        }
    }

    // Extend free ends along their direction to the first trace hit within reach.
    let boundary: Vec<Trace> = (0..ring.len()).map(|i| Trace { a: ring[i], b: ring[(i + 1) % ring.len()], kind: TraceKind::Boundary }).collect();
    for k in 0..traces.len() {
        for end in [0, 1] {
            let t = traces[k];
            let (p, d) = if end == 0 { (t.a, -t.dir()) } else { (t.b, t.dir()) };
            let targets = boundary.iter().chain(others.iter()).chain(traces.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, x)| x));
            let already = targets.clone().any(|s| point_segment_distance(p, s.a, s.b) <= 1e-6);
            if already {
                continue;
            }
            let mut best: Option<f64> = None;
            for s in targets {
                let e = s.b - s.a;
                let den = d.cross(e);
                if den.abs() < 1e-12 {
                    continue;
                }
                let u = (s.a - p).cross(d) / den;
                let tt = (s.a - p).cross(e) / den;
                if (-1e-9..=1.0 + 1e-9).contains(&u) && tt > 1e-9 && tt <= params.extend && best.map_or(true, |b| tt < b) {
                    best = Some(tt);
                }
            }
            if let Some(tt) = best {
                let q = p + d * tt;
                if end == 0 {
                    traces[k].a = q;
                } else {
                    traces[k].b = q;
                }
            }
        }
    }
    traces
}
