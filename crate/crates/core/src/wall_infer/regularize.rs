//! Regularity enhancement of wall traces: clustering by orientation and distance, then
//! adjustment to shared, collinear, orthogonal or footprint-aligned directions.

use std::collections::{BTreeMap, HashMap};

use super::polyline::{Polyline, PolylineSet, SegmentTag};
use crate::geom::point_segment_distance;
use crate::{Point2, Polygon2, Vector2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizeParams {
    /// Orientation threshold for clustering and snapping (degrees).
    pub angle_deg: f64,
    /// Clustering distance between a segment and another's supporting line (m).
    pub cluster_dist: f64,
    /// Parallel lines of one cluster closer than this are merged (m).
    pub merge_dist: f64,
    /// Segments shorter than this between two non-parallel neighbours are absorbed into
    /// the neighbours' intersection (m).
    pub min_segment: f64,
    /// A re-intersected vertex may move at most this far; otherwise the polyline is split (m).
    pub max_shift: f64,
    /// Mutually nearest dangling endpoints closer than this are bridged (m).
    pub bridge_dist: f64,
}

impl Default for RegularizeParams {
    fn default() -> Self {
        Self { angle_deg: 20.0, cluster_dist: 1.0, merge_dist: 0.3, min_segment: 1.0, max_shift: 1.0, bridge_dist: 1.0 }
    }
}

/// Orientation in [0, π).
fn orientation(d: Vector2) -> f64 {
    let a = d.y.atan2(d.x);
    if a < 0.0 {
        a + std::f64::consts::PI
    } else if a >= std::f64::consts::PI {
        a - std::f64::consts::PI
    } else {
        a
    }
}

/// Angle between two orientations modulo π, in [0, π/2].
fn orientation_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % std::f64::consts::PI;
    d.min(std::f64::consts::PI - d)
}

/// Sign convention for undirected directions: x > 0, or x = 0 and y > 0. Exact.
fn canonical(d: Vector2) -> Vector2 {
    if d.x < 0.0 || (d.x == 0.0 && d.y < 0.0) {
        -d
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Line {
    dir: Vector2,
    /// `normal · x = offset` with `normal = dir.perp()`.
    offset: f64,
}

impl Line {
    fn normal(&self) -> Vector2 {
        self.dir.perp()
    }

    fn project(&self, p: Point2) -> Point2 {
        let n = self.normal();
        p - n * (n.dot(p) - self.offset)
    }

    fn same(&self, o: &Line) -> bool {
        self.dir == o.dir && self.offset == o.offset
    }

    fn intersect(&self, o: &Line) -> Option<Point2> {
        let (n1, n2) = (self.normal(), o.normal());
        let det = n1.x * n2.y - n1.y * n2.x;
        if det.abs() < 1e-9 {
            return None;
        }
        Some(Point2::new((self.offset * n2.y - n1.y * o.offset) / det, (n1.x * o.offset - self.offset * n2.x) / det))
    }
}

#[derive(Debug, Clone)]
struct Seg {
    a: usize,
    b: usize,
    alive: bool,
    cluster: usize,
    line: Option<Line>,
    /// Added to close a gap; absorbable at any length.
    bridge: bool,
}

struct Graph {
    verts: Vec<Point2>,
    segs: Vec<Seg>,
}

impl Graph {
    fn from_polylines(pl: &PolylineSet) -> Self {
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut verts = Vec::new();
        let mut segs = Vec::new();
        let mut vid = |p: Point2, verts: &mut Vec<Point2>| {
            *index.entry(((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())).or_insert_with(|| {
                verts.push(p);
                verts.len() - 1
            })
        };
        for l in &pl.polylines {
            for (a, b) in l.segments() {
                let (ia, ib) = (vid(a, &mut verts), vid(b, &mut verts));
                if ia != ib {
                    segs.push(Seg { a: ia, b: ib, alive: true, cluster: 0, line: None, bridge: false });
                }
            }
        }
        Self { verts, segs }
    }

    fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.verts.len()];
        for (k, s) in self.segs.iter().enumerate() {
            if s.alive {
                inc[s.a].push(k);
                inc[s.b].push(k);
            }
        }
        inc
    }

    fn other(&self, s: usize, v: usize) -> usize {
        if self.segs[s].a == v {
            self.segs[s].b
        } else {
            self.segs[s].a
        }
    }

    fn seg_len(&self, s: usize) -> f64 {
        self.verts[self.segs[s].a].distance(self.verts[self.segs[s].b])
    }
}

/// Joins pairs of degree-1 vertices that are each other's nearest dangling endpoint and
/// closer than `dist`, closing small breaks left by the contour extraction.
fn bridge_gaps(g: &mut Graph, dist: f64) {
    let inc = g.incidence();
    let ends: Vec<usize> = (0..g.verts.len()).filter(|&v| inc[v].len() == 1).collect();
    let nearest = |v: usize| {
        ends.iter()
            .copied()
            .filter(|&w| w != v && g.other(inc[v][0], v) != w)
            .map(|w| (g.verts[v].distance(g.verts[w]), w))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
    };
    let mut bridges = Vec::new();
    for &v in &ends {
        if let Some((d, w)) = nearest(v) {
            if v < w && d < dist && nearest(w).map(|x| x.1) == Some(v) {
                bridges.push((v, w));
            }
        }
    }
    // Remaining dangling ends attach to the nearest vertex that is not just a few steps
    // back along their own chain.
    let paired: Vec<usize> = bridges.iter().flat_map(|&(a, b)| [a, b]).collect();
    for &v in ends.iter().filter(|v| !paired.contains(v)) {
        let mut near = vec![v];
        let mut frontier = vec![v];
        for _ in 0..3 {
            let mut nxt = Vec::new();
            for &x in &frontier {
                for &s in &inc[x] {
                    let y = g.other(s, x);
                    if !near.contains(&y) {
                        near.push(y);
                        nxt.push(y);
                    }
                }
            }
            frontier = nxt;
        }
        let target = (0..g.verts.len())
            .filter(|&w| !inc[w].is_empty() && !near.contains(&w))
            .map(|w| (g.verts[v].distance(g.verts[w]), w))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if let Some((d, w)) = target {
            if d < dist {
                bridges.push((v, w));
            }
        }
    }
    for (a, b) in bridges {
        g.segs.push(Seg { a, b, alive: true, cluster: 0, line: None, bridge: true });
    }
}

fn union_find_root(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Length-weighted mean orientation modulo 90° over the segments near the current estimate
/// or its perpendicular, so both wall families inform the grid direction. The window shrinks
/// from `tol` to a quarter of it to shed diagonal outliers.
fn refine_dominant(initial: f64, orient: &[f64], length: &[f64], tol: f64) -> Vector2 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let mut th = initial;
    for window in [tol, 0.5 * tol, 0.25 * tol] {
        let (mut s, mut c) = (0.0, 0.0);
        for (&o, &l) in orient.iter().zip(length) {
            if orientation_gap(o, th) < window || orientation_gap(o, th + quarter) < window {
                s += l * (4.0 * o).sin();
                c += l * (4.0 * o).cos();
            }
        }
        if s == 0.0 && c == 0.0 {
            break;
        }
        let base = 0.25 * s.atan2(c);
        // Representative of base + k·90° closest to the current estimate.
        th = (0..4).map(|k| base + k as f64 * quarter).min_by(|a, b| orientation_gap(*a, th).total_cmp(&orientation_gap(*b, th))).unwrap();
    }
    canonical(Vector2::new(th.cos(), th.sin()))
}

/// Regularizes polylines with default thresholds.
pub fn regularize(pl: &PolylineSet, footprint: Option<&Polygon2>) -> PolylineSet {
    regularize_with(pl, footprint, &RegularizeParams::default())
}

pub fn regularize_with(pl: &PolylineSet, footprint: Option<&Polygon2>, params: &RegularizeParams) -> PolylineSet {
    let mut g = Graph::from_polylines(pl);
    bridge_gaps(&mut g, params.bridge_dist);
    let n = g.segs.len();
    if n == 0 {
        return PolylineSet::default();
    }
    let tol = params.angle_deg.to_radians();
    let seg_pts: Vec<(Point2, Point2)> = g.segs.iter().map(|s| (g.verts[s.a], g.verts[s.b])).collect();
    let orient: Vec<f64> = seg_pts.iter().map(|(a, b)| orientation(*b - *a)).collect();
    let length: Vec<f64> = seg_pts.iter().map(|(a, b)| a.distance(*b)).collect();

    // Density-based clustering with a minimum cluster size of one: connected components of
    // the "similar orientation and close to each other's supporting line" relation.
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if orientation_gap(orient[i], orient[j]) >= tol {
                continue;
            }
            let (a, b) = seg_pts[i];
            let (c, d) = seg_pts[j];
            let dist = point_segment_distance(a, c, d).min(point_segment_distance(b, c, d)).min(point_segment_distance(c, a, b)).min(point_segment_distance(d, a, b));
            if dist <= params.cluster_dist {
                let (ri, rj) = (union_find_root(&mut parent, i), union_find_root(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        clusters.entry(union_find_root(&mut parent, i)).or_default().push(i);
    }
    let clusters: Vec<Vec<usize>> = clusters.into_values().collect();

    // Length-weighted mean orientation per cluster (doubled angles handle the mod-π wrap).
    let mut dirs: Vec<Vector2> = clusters
        .iter()
        .map(|m| {
            let (s, c) = m.iter().fold((0.0, 0.0), |(s, c), &i| (s + length[i] * (2.0 * orient[i]).sin(), c + length[i] * (2.0 * orient[i]).cos()));
            let th = 0.5 * s.atan2(c);
            canonical(Vector2::new(th.cos(), th.sin()))
        })
        .collect();
    let weight: Vec<f64> = clusters.iter().map(|m| m.iter().map(|&i| length[i]).sum()).collect();

    // Footprint alignment first, then snapping to the dominant direction or its perpendicular.
    let mut fixed = vec![false; clusters.len()];
    if let Some(fp) = footprint {
        let edges: Vec<Vector2> = fp.outer().iter().zip(fp.outer().iter().cycle().skip(1)).map(|(a, b)| *b - *a).collect();
        for (c, d) in dirs.iter_mut().enumerate() {
            let o = orientation(*d);
            let best = edges
                .iter()
                .filter(|e| e.norm() > 0.0)
                .map(|e| (orientation_gap(o, orientation(*e)), *e))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            if let Some((gap, e)) = best {
                if gap < tol {
                    *d = canonical(e.normalized());
                    fixed[c] = true;
                }
            }
        }
    }
    let dominant = (0..clusters.len()).max_by(|&a, &b| weight[a].total_cmp(&weight[b]).then(b.cmp(&a))).unwrap();
    let main = if fixed[dominant] { dirs[dominant] } else { refine_dominant(orientation(dirs[dominant]), &orient, &length, tol) };
    let ortho = canonical(main.perp());
    for c in 0..clusters.len() {
        if fixed[c] {
            continue;
        }
        let o = orientation(dirs[c]);
        if orientation_gap(o, orientation(main)) < tol {
            dirs[c] = main;
        } else if orientation_gap(o, orientation(ortho)) < tol {
            dirs[c] = ortho;
        }
    }

    // Parallel supporting lines within `merge_dist` of each other share one line placed at
    // their length-weighted mean offset. Lines are grouped by final direction, so pieces of one
    // wall that ended up in different clusters still become collinear.
    let mut by_dir: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (c, members) in clusters.iter().enumerate() {
        let d = dirs[c];
        by_dir.entry((d.x.to_bits(), d.y.to_bits())).or_default().extend(members.iter().copied());
        for &i in members {
            g.segs[i].cluster = c;
        }
    }
    for members in by_dir.values() {
        let d = dirs[g.segs[members[0]].cluster];
        let nrm = d.perp();
        let mut offs: Vec<(f64, usize)> = members
            .iter()
            .map(|&i| {
                let (a, b) = seg_pts[i];
                (nrm.dot((a + b) * 0.5), i)
            })
            .collect();
        offs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut start = 0;
        while start < offs.len() {
            let mut end = start + 1;
            while end < offs.len() && offs[end].0 - offs[end - 1].0 <= params.merge_dist {
                end += 1;
            }
            let w: f64 = offs[start..end].iter().map(|&(_, i)| length[i]).sum();
            let off = offs[start..end].iter().map(|&(o, i)| o * length[i]).sum::<f64>() / w;
            for &(_, i) in &offs[start..end] {
                g.segs[i].line = Some(Line { dir: d, offset: off });
            }
            start = end;
        }
    }

    reposition_vertices(&mut g, params.max_shift);
    node_network(&mut g);
    absorb_short_segments(&mut g, params);
    merge_collinear(&mut g);
    to_polylines(&g)
}

/// Moves every vertex onto the lines of its incident segments: projection for one line,
/// least-squares intersection for several. A vertex whose intersection is ill-conditioned or
/// farther than `max_shift` is split so each segment keeps its own projected endpoint.
fn reposition_vertices(g: &mut Graph, max_shift: f64) {
    let inc = g.incidence();
    let n0 = g.verts.len();
    for v in 0..g.verts.len() {
        if inc[v].is_empty() {
            continue;
        }
        let old = g.verts[v];
        let mut lines: Vec<Line> = Vec::new();
        for &s in &inc[v] {
            let l = g.segs[s].line.unwrap();
            if !lines.iter().any(|x| x.same(&l)) {
                lines.push(l);
            }
        }
        if lines.len() == 1 {
            g.verts[v] = lines[0].project(old);
            continue;
        }
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for l in &lines {
            let nr = l.normal();
            a11 += nr.x * nr.x;
            a12 += nr.x * nr.y;
            a22 += nr.y * nr.y;
            b1 += nr.x * l.offset;
            b2 += nr.y * l.offset;
        }
        let det = a11 * a22 - a12 * a12;
        let solved = if lines.len() == 2 {
            lines[0].intersect(&lines[1])
        } else if det > 1e-6 {
            Some(Point2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
        } else {
            None
        };
        match solved {
            Some(p) if p.distance(old) <= max_shift => g.verts[v] = p,
            _ => {
                // Split: the first segment keeps `v`, the others get fresh vertices joined to
                // `v` by short connectors so the network stays connected.
                for (k, &s) in inc[v].iter().enumerate() {
                    let p = g.segs[s].line.unwrap().project(old);
                    if k == 0 {
                        g.verts[v] = p;
                        continue;
                    }
                    let nv = match std::iter::once(v).chain(n0..g.verts.len()).find(|&u| g.verts[u] == p) {
                        Some(u) => u,
                        None => {
                            g.verts.push(p);
                            g.verts.len() - 1
                        }
                    };
                    let seg = &mut g.segs[s];
                    if seg.a == v {
                        seg.a = nv;
                    } else {
                        seg.b = nv;
                    }
                    let cluster = seg.cluster;
                    if g.verts[nv].distance(g.verts[v]) > 1e-9 && !g.segs.iter().any(|x| x.alive && ((x.a == v && x.b == nv) || (x.a == nv && x.b == v))) {
                        let dir = canonical((g.verts[nv] - g.verts[v]).normalized());
                        let offset = dir.perp().dot(g.verts[v]);
                        g.segs.push(Seg { a: v, b: nv, alive: true, cluster, line: Some(Line { dir, offset }), bridge: false });
                    }
                }
            }
        }
    }
    for s in &mut g.segs {
        if s.alive && g.verts[s.a].distance(g.verts[s.b]) <= 1e-9 {
            s.alive = false;
        }
    }
}

const NODE_TOL: f64 = 1e-6;

/// Makes the segment network planar after repositioning: coincident vertices are welded,
/// crossings and vertices lying on a segment's interior split it, and duplicates are dropped.
fn node_network(g: &mut Graph) {
    // Weld vertices (first index wins).
    let mut remap: Vec<usize> = (0..g.verts.len()).collect();
    for v in 0..g.verts.len() {
        if let Some(u) = (0..v).find(|&u| remap[u] == u && g.verts[u].distance(g.verts[v]) <= NODE_TOL) {
            remap[v] = u;
        }
    }
    for s in &mut g.segs {
        s.a = remap[s.a];
        s.b = remap[s.b];
        if s.a == s.b {
            s.alive = false;
        }
    }
    // Proper crossings.
    let mut k = 0;
    while k < g.segs.len() {
        if g.segs[k].alive {
            for m in k + 1..g.segs.len() {
                if !g.segs[m].alive {
                    continue;
                }
                let (a, b, c, d) = (g.segs[k].a, g.segs[k].b, g.segs[m].a, g.segs[m].b);
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                let (pa, pb, pc, pd) = (g.verts[a], g.verts[b], g.verts[c], g.verts[d]);
                let (r, q) = (pb - pa, pd - pc);
                let den = r.cross(q);
                if den.abs() < 1e-12 {
                    continue;
                }
                let t = (pc - pa).cross(q) / den;
                let u = (pc - pa).cross(r) / den;
                let (tl, ul) = (NODE_TOL / r.norm(), NODE_TOL / q.norm());
                if t > tl && t < 1.0 - tl && u > ul && u < 1.0 - ul {
                    g.verts.push(pa + r * t);
                    let x = g.verts.len() - 1;
                    split_segment(g, k, x);
                    split_segment(g, m, x);
                }
            }
        }
        k += 1;
    }
    // Vertices on segment interiors.
    let live: Vec<bool> = g.incidence().iter().map(|i| !i.is_empty()).collect();
    let mut k = 0;
    while k < g.segs.len() {
        if g.segs[k].alive {
            let (a, b) = (g.segs[k].a, g.segs[k].b);
            let (pa, pb) = (g.verts[a], g.verts[b]);
            let hit = (0..g.verts.len()).filter(|&v| live[v] && v != a && v != b).find(|&v| {
                let p = g.verts[v];
                let t = (p - pa).dot(pb - pa) / (pb - pa).norm_squared();
                t > 0.0 && t < 1.0 && point_segment_distance(p, pa, pb) <= NODE_TOL
            });
            if let Some(v) = hit {
                split_segment(g, k, v);
                continue;
            }
        }
        k += 1;
    }
    let mut seen = std::collections::HashSet::new();
    for s in &mut g.segs {
        if s.alive && !seen.insert((s.a.min(s.b), s.a.max(s.b))) {
            s.alive = false;
        }
    }
}

/// Splits segment `k` at vertex `x`; the tail becomes a new segment with the same line.
fn split_segment(g: &mut Graph, k: usize, x: usize) {
    let mut tail = g.segs[k].clone();
    tail.a = x;
    g.segs[k].b = x;
    g.segs.push(tail);
}

/// Absorbs chains of up to three short segments (cut corners, small bumps) joining two
/// neighbours that are collinear or clearly non-parallel: the chain collapses to the
/// neighbours' intersection, or to the shared line for collinear neighbours.
fn absorb_short_segments(g: &mut Graph, params: &RegularizeParams) {
    let short = |g: &Graph, s: usize| g.segs[s].bridge || g.seg_len(s) < params.min_segment;
    loop {
        let inc = g.incidence();
        let mut changed = false;
        let mut order: Vec<usize> = (0..g.segs.len()).filter(|&s| g.segs[s].alive && short(g, s)).collect();
        order.sort_by(|&x, &y| g.seg_len(x).total_cmp(&g.seg_len(y)).then(x.cmp(&y)));
        'seed: for s in order {
            // Grow the chain from `s` through degree-2 vertices while the next segment is short.
            let mut chain = vec![s];
            let (mut a, mut b) = (g.segs[s].a, g.segs[s].b);
            for _ in 0..2 {
                let mut grown = false;
                for end in [0, 1] {
                    let v = if end == 0 { a } else { b };
                    if inc[v].len() != 2 || chain.len() == 3 {
                        continue;
                    }
                    let last = if end == 0 { chain[0] } else { *chain.last().unwrap() };
                    let t = if inc[v][0] == last { inc[v][1] } else { inc[v][0] };
                    if chain.contains(&t) || !short(g, t) {
                        continue;
                    }
                    let w = g.other(t, v);
                    if end == 0 {
                        chain.insert(0, t);
                        a = w;
                    } else {
                        chain.push(t);
                        b = w;
                    }
                    grown = true;
                }
                if !grown {
                    break;
                }
            }
            if a == b || inc[a].len() != 2 || inc[b].len() != 2 {
                continue;
            }
            let sa = if inc[a][0] == chain[0] { inc[a][1] } else { inc[a][0] };
            let sb = if inc[b][0] == *chain.last().unwrap() { inc[b][1] } else { inc[b][0] };
            if sa == sb || chain.contains(&sa) || chain.contains(&sb) {
                continue;
            }
            let (la, lb) = (g.segs[sa].line.unwrap(), g.segs[sb].line.unwrap());
            let mid = (g.verts[a] + g.verts[b]) * 0.5;
            let target = if la.same(&lb) {
                Some(la.project(mid))
            } else if orientation_gap(orientation(la.dir), orientation(lb.dir)) >= params.angle_deg.to_radians() {
                la.intersect(&lb)
            } else {
                None
            };
            let Some(x) = target else { continue };
            if x.distance(mid) > 2.0 * params.min_segment {
                continue;
            }
            // Keep the neighbours' far ends fixed so nothing else moves.
            let (fa, fb) = (g.other(sa, a), g.other(sb, b));
            if fa == b || fb == a || g.verts[fa].distance(x) <= 1e-9 || g.verts[fb].distance(x) <= 1e-9 {
                continue 'seed;
            }
            g.verts[a] = x;
            for &c in &chain {
                g.segs[c].alive = false;
            }
            let seg = &mut g.segs[sb];
            if seg.a == b {
                seg.a = a;
            } else {
                seg.b = a;
            }
            changed = true;
            break;
        }
        if !changed {
            break;
        }
    }
}

/// Fuses consecutive segments lying on the same line through a degree-2 vertex.
fn merge_collinear(g: &mut Graph) {
    loop {
        let inc = g.incidence();
        let mut changed = false;
        for v in 0..g.verts.len() {
            if inc[v].len() != 2 {
                continue;
            }
            let (s, t) = (inc[v][0], inc[v][1]);
            let (ls, lt) = (g.segs[s].line.unwrap(), g.segs[t].line.unwrap());
            if !ls.same(&lt) {
                continue;
            }
            let (fs, ft) = (g.other(s, v), g.other(t, v));
            if fs == ft {
                continue;
            }
            g.segs[t].alive = false;
            let seg = &mut g.segs[s];
            if seg.a == v {
                seg.a = ft;
            } else {
                seg.b = ft;
            }
            changed = true;
            break;
        }
        if !changed {
            break;
        }
    }
}

fn to_polylines(g: &Graph) -> PolylineSet {
    let inc = g.incidence();
    let mut used = vec![false; g.segs.len()];
    let mut out = PolylineSet::default();
    let tag = |s: usize| {
        let seg = &g.segs[s];
        Some(SegmentTag { cluster: seg.cluster, direction: seg.line.unwrap().dir })
    };
    let walk = |start: usize, first: usize, used: &mut Vec<bool>| {
        let mut pts = vec![g.verts[start]];
        let mut tags = Vec::new();
        let (mut v, mut s) = (start, first);
        loop {
            used[s] = true;
            tags.push(tag(s));
            v = g.other(s, v);
            if v == start {
                return Polyline { points: pts, closed: true, tags };
            }
            pts.push(g.verts[v]);
            if inc[v].len() != 2 {
                break;
            }
            match inc[v].iter().copied().find(|&t| !used[t]) {
                Some(t) => s = t,
                None => break,
            }
        }
        Polyline { points: pts, closed: false, tags }
    };
    for v in 0..g.verts.len() {
        if inc[v].is_empty() || inc[v].len() == 2 {
            continue;
        }
        for &s in &inc[v] {
            if !used[s] {
                out.polylines.push(walk(v, s, &mut used));
            }
        }
    }
    for v in 0..g.verts.len() {
        if let Some(&s) = inc[v].iter().find(|&&s| !used[s]) {
            out.polylines.push(walk(v, s, &mut used));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(lines: Vec<(Vec<Point2>, bool)>) -> PolylineSet {
        PolylineSet { polylines: lines.into_iter().map(|(p, c)| Polyline::new(p, c)).collect() }
    }

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn near_right_angle_snaps_exactly() {
        let a = 88f64.to_radians();
        let pl = set(vec![(vec![p(5.0, 0.0), p(0.0, 0.0), p(5.0 * a.cos(), 5.0 * a.sin())], false)]);
        let out = regularize(&pl, None);
        let dirs: Vec<Vector2> = out.polylines.iter().flat_map(|l| l.tags.iter().map(|t| t.unwrap().direction)).collect();
        assert_eq!(dirs.len(), 2);
        assert_eq!(dirs[0].dot(dirs[1]), 0.0);
    }

    #[test]
    fn isolated_segment_unchanged() {
        let pl = set(vec![(vec![p(1.0, 2.0), p(4.0, 3.0)], false)]);
        let out = regularize(&pl, None);
        let l = &out.polylines[0];
        let d = (l.points[1] - l.points[0]).normalized();
        let d0 = p(3.0, 1.0).normalized();
        assert!(d.cross(d0).abs() < 1e-12);
        assert!(l.points[0].distance(p(1.0, 2.0)) < 1e-12 && l.points[1].distance(p(4.0, 3.0)) < 1e-12);
    }

    #[test]
    fn footprint_direction_adopted() {
        let fp = Polygon2::new(vec![p(0.0, 0.0), p(10.0, 1.0), p(9.0, 11.0), p(-1.0, 10.0)], vec![]).unwrap();
        let pl = set(vec![(vec![p(0.0, 0.5), p(10.0, 1.2)], false)]);
        let out = regularize(&pl, Some(&fp));
        let d = out.polylines[0].tags[0].unwrap().direction;
        assert_eq!(d, canonical(p(10.0, 1.0).normalized()));
    }

    #[test]
    fn jagged_square_collapses() {
        let pts = vec![p(0.0, 0.05), p(5.0, -0.05), p(10.0, 0.1), p(10.1, 5.0), p(9.95, 10.0), p(5.0, 10.1), p(0.0, 9.9), p(-0.1, 5.0)];
        let pl = set(vec![(pts, true)]);
        let out = regularize(&pl, None);
        assert_eq!(out.segment_count(), 4);
        assert!(out.polylines[0].closed);
        let dirs: Vec<Vector2> = out.polylines[0].tags.iter().map(|t| t.unwrap().direction).collect();
        for a in &dirs {
            for b in &dirs {
                assert!(a.dot(*b) == 0.0 || a.cross(*b) == 0.0);
            }
        }
    }

    #[test]
    fn corner_chamfer_absorbed() {
        let pts = vec![p(0.0, 0.0), p(9.6, 0.0), p(10.0, 0.4), p(10.0, 6.0), p(0.0, 6.0)];
        let out = regularize(&set(vec![(pts, true)]), None);
        assert_eq!(out.segment_count(), 4);
        assert!(out.polylines[0].points.iter().any(|q| q.distance(p(10.0, 0.0)) < 1e-9));
    }

    #[test]
    fn t_junction_kept_connected() {
        let ring = vec![p(0.0, 0.0), p(8.0, 0.1), p(16.0, 0.0), p(16.0, 10.0), p(8.0, 9.9), p(0.0, 10.0)];
        let chord = vec![p(8.0, 0.1), p(8.1, 5.0), p(8.0, 9.9)];
        let out = regularize(&set(vec![(ring, true), (chord, false)]), None);
        // The chord's endpoints must coincide with ring vertices.
        let ends: Vec<Point2> = out.polylines.iter().filter(|l| !l.closed).flat_map(|l| [l.points[0], *l.points.last().unwrap()]).collect();
        let all: Vec<Point2> = out.polylines.iter().flat_map(|l| l.points.clone()).collect();
        for e in ends {
            assert!(all.iter().filter(|q| **q == e).count() >= 2);
        }
        assert!(out.segment_count() <= 7);
    }
}
