//! Polyline extraction from contour pixels: the Delaunay triangulation of the pixels is
//! decimated by half-edge collapses, each pixel's mass being transported onto the remaining
//! edges. A collapse is admissible only if every moved pixel stays within ε_d of the edge it
//! is assigned to; among admissible collapses the one with the smallest increase of total
//! transport cost is applied, until none remains or the cumulative increase would exceed ε_c.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use super::canny::ContourPixels;
use super::polyline::{Polyline, PolylineSet};
use crate::geom::{delaunay, point_segment_distance};
use crate::{Error, Point2, Result};

/// Edge groups supported by fewer pixels than this are discarded as noise.
/// Minimum pixel mass per pixel-length of a long solid edge.
const MIN_COVERAGE: f64 = 0.5;

pub const EDGE_FILTER_SUPPORT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtParams {
    pub epsilon_d: f64,
    pub epsilon_c: f64,
    pub min_group_support: usize,
}

impl Default for OtParams {
    fn default() -> Self {
        Self { epsilon_d: 0.25, epsilon_c: 2.0, min_group_support: EDGE_FILTER_SUPPORT }
    }
}

/// Instrumentation of one extraction run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OtReport {
    pub collapses: usize,
    /// Cumulative cost increase after each collapse; starts at 0, never decreases.
    pub history: Vec<f64>,
    pub cumulative_increase: f64,
    /// Transport cost of the final assignment.
    pub total_cost: f64,
    /// Largest distance from a retained pixel to the element it is assigned to.
    pub max_assigned_distance: f64,
    /// Indices of pixels surviving edge filtering.
    pub retained: Vec<usize>,
    pub dropped: usize,
    pub stopped_by_budget: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub polylines: PolylineSet,
    pub report: OtReport,
}

/// Cost of transporting unit-mass `pixels` onto the segment `a`–`b` carrying a uniform
/// measure: squared orthogonal distances plus the squared deviations of the sorted
/// tangential coordinates from evenly spread targets `(i + ½)·|ab|/n`.
pub fn transport_cost(a: Point2, b: Point2, pixels: &[Point2]) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let len = a.distance(b);
    let dir = (b - a) / len;
    let mut normal = 0.0;
    let mut ts: Vec<f64> = pixels
        .iter()
        .map(|&p| {
            let q = p - a;
            normal += q.cross(dir).powi(2);
            q.dot(dir)
        })
        .collect();
    ts.sort_by(f64::total_cmp);
    let n = ts.len() as f64;
    let tangential: f64 = ts.iter().enumerate().map(|(i, t)| (t - (i as f64 + 0.5) * len / n).powi(2)).sum();
    normal + tangential
}

fn vertex_cost(v: Point2, pixels: &[Point2]) -> f64 {
    pixels.iter().map(|p| p.distance(v).powi(2)).sum()
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Edge(usize),
    Vertex,
}

struct Candidate {
    delta: f64,
    moves: Vec<(usize, Target)>,
}

#[derive(Debug, Clone, Copy)]
struct QueueItem {
    delta: f64,
    v: usize,
    u: usize,
    version: u64,
}

impl PartialEq for QueueItem {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for QueueItem {
    // Reversed so that `BinaryHeap` pops the smallest increase, then the lowest vertex.
    fn cmp(&self, o: &Self) -> Ordering {
        o.delta.total_cmp(&self.delta).then(o.v.cmp(&self.v)).then(o.u.cmp(&self.u))
    }
}

struct Simplifier<'a> {
    pts: &'a [Point2],
    eps_d: f64,
    alive: Vec<bool>,
    adj: Vec<BTreeSet<usize>>,
    edge_px: HashMap<(usize, usize), Vec<usize>>,
    edge_cost: HashMap<(usize, usize), f64>,
    vertex_px: Vec<Vec<usize>>,
    version: Vec<u64>,
}

impl<'a> Simplifier<'a> {
    fn new(pts: &'a [Point2], edges: &[(usize, usize)], eps_d: f64) -> Self {
        let n = pts.len();
        let mut adj = vec![BTreeSet::new(); n];
        let mut edge_px = HashMap::new();
        let mut edge_cost = HashMap::new();
        for &(a, b) in edges {
            adj[a].insert(b);
            adj[b].insert(a);
            edge_px.insert(key(a, b), Vec::new());
            edge_cost.insert(key(a, b), 0.0);
        }
        Self {
            pts,
            eps_d,
            alive: vec![true; n],
            adj,
            edge_px,
            edge_cost,
            vertex_px: (0..n).map(|i| vec![i]).collect(),
            version: vec![0; n],
        }
    }

    fn positions(&self, idx: &[usize]) -> Vec<Point2> {
        idx.iter().map(|&i| self.pts[i]).collect()
    }

    /// Half-edge collapse of `v` onto `u`, or `None` when it would break the ε_d bound.
    fn evaluate(&self, v: usize, u: usize) -> Option<Candidate> {
        let (pu, pv) = (self.pts[u], self.pts[v]);
        let mut affected = self.vertex_px[v].clone();
        let mut old = vertex_cost(pv, &self.positions(&self.vertex_px[v]));
        for &w in &self.adj[v] {
            affected.extend_from_slice(&self.edge_px[&key(v, w)]);
            old += self.edge_cost[&key(v, w)];
        }
        let targets: BTreeSet<usize> = self.adj[u].iter().chain(&self.adj[v]).copied().filter(|&w| w != u && w != v).collect();

        if targets.is_empty() {
            if affected.iter().any(|&p| self.pts[p].distance(pu) > self.eps_d) {
                return None;
            }
            let mut all = self.positions(&self.vertex_px[u]);
            let before = vertex_cost(pu, &all);
            all.extend(self.positions(&affected));
            let delta = vertex_cost(pu, &all) - before - old;
            return Some(Candidate { delta, moves: affected.into_iter().map(|p| (p, Target::Vertex)).collect() });
        }

        let mut moves = Vec::with_capacity(affected.len());
        let mut gained: HashMap<usize, Vec<usize>> = HashMap::new();
        for &p in &affected {
            let q = self.pts[p];
            let mut best = (f64::INFINITY, usize::MAX);
            for &w in &targets {
                let d = point_segment_distance(q, pu, self.pts[w]);
                if d < best.0 {
                    best = (d, w);
                }
            }
            if best.0 > self.eps_d {
                return None;
            }
            moves.push((p, Target::Edge(best.1)));
            gained.entry(best.1).or_default().push(p);
        }
        let mut delta = -old;
        for (&w, px) in &gained {
            let k = key(u, w);
            let mut all = self.edge_px.get(&k).cloned().unwrap_or_default();
            delta -= self.edge_cost.get(&k).copied().unwrap_or(0.0);
            all.extend_from_slice(px);
            delta += transport_cost(pu, self.pts[w], &self.positions(&all));
        }
        Some(Candidate { delta, moves })
    }

    fn best(&self, v: usize) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for &u in &self.adj[v] {
            if let Some(c) = self.evaluate(v, u) {
                if best.map_or(true, |(d, _)| c.delta < d) {
                    best = Some((c.delta, u));
                }
            }
        }
        best
    }

    fn apply(&mut self, v: usize, u: usize, cand: Candidate) {
        let nbrs: Vec<usize> = self.adj[v].iter().copied().collect();
        for w in nbrs {
            self.adj[w].remove(&v);
            self.edge_px.remove(&key(v, w));
            self.edge_cost.remove(&key(v, w));
            if w != u && self.adj[u].insert(w) {
                self.adj[w].insert(u);
                self.edge_px.insert(key(u, w), Vec::new());
                self.edge_cost.insert(key(u, w), 0.0);
            }
        }
        self.adj[v].clear();
        self.vertex_px[v].clear();
        self.alive[v] = false;
        let mut touched = BTreeSet::new();
        for (p, t) in cand.moves {
            match t {
                Target::Edge(w) => {
                    self.edge_px.get_mut(&key(u, w)).expect("target edge exists").push(p);
                    touched.insert(w);
                }
                Target::Vertex => self.vertex_px[u].push(p),
            }
        }
        for w in touched {
            let k = key(u, w);
            let cost = transport_cost(self.pts[u], self.pts[w], &self.positions(&self.edge_px[&k]));
            self.edge_cost.insert(k, cost);
        }
    }

    fn total_cost(&self) -> f64 {
        let e: f64 = self.edge_cost.values().sum();
        let v: f64 = (0..self.pts.len()).map(|i| vertex_cost(self.pts[i], &self.positions(&self.vertex_px[i]))).sum();
        e + v
    }
}

/// Extracts polylines from contour pixels. See the module docs for the stop rules.
pub fn extract_polylines(s: &ContourPixels, params: &OtParams) -> Result<Extraction> {
    let pts = &s.points;
    if pts.len() < 3 {
        return Err(Error::TooFewPixels(pts.len()));
    }
    let tri = delaunay(pts)?;
    let mut st = Simplifier::new(pts, &tri.edges, params.epsilon_d);
    let mut report = OtReport { history: vec![0.0], ..Default::default() };

    let mut heap = BinaryHeap::new();
    for v in 0..pts.len() {
        if let Some((delta, u)) = st.best(v) {
            heap.push(QueueItem { delta, v, u, version: 0 });
        }
    }
    while let Some(item) = heap.pop() {
        if !st.alive[item.v] || item.version != st.version[item.v] {
            continue;
        }
        let inc = item.delta.max(0.0);
        if report.cumulative_increase + inc > params.epsilon_c {
            report.stopped_by_budget = true;
            break;
        }
        let cand = st.evaluate(item.v, item.u).expect("queued collapse stays admissible until invalidated");
        st.apply(item.v, item.u, cand);
        report.cumulative_increase += inc;
        report.history.push(report.cumulative_increase);
        report.collapses += 1;

        let mut dirty: BTreeSet<usize> = BTreeSet::new();
        dirty.insert(item.u);
        for &x in &st.adj[item.u] {
            dirty.insert(x);
            dirty.extend(st.adj[x].iter().copied());
        }
        dirty.remove(&item.v);
        for x in dirty {
            st.version[x] += 1;
            if let Some((delta, u)) = st.best(x) {
                heap.push(QueueItem { delta, v: x, u, version: st.version[x] });
            }
        }
    }
    report.total_cost = st.total_cost();

    // Solid edges carry pixel mass or join grid-adjacent pixels that were never simplified.
    // Longer edges must be covered along their length: a shortcut that picked up a pixel or
    // two near its endpoints during reassignment is not evidence of a contour.
    let adjacency = std::f64::consts::SQRT_2 * s.resolution * (1.0 + 1e-9);
    let n = pts.len();
    let mut solid: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut keys: Vec<&(usize, usize)> = st.edge_px.keys().collect();
    keys.sort_unstable();
    for &(a, b) in keys {
        let px = &st.edge_px[&(a, b)];
        let len = pts[a].distance(pts[b]);
        let covered = len <= 2.0 * adjacency || px.len() as f64 >= MIN_COVERAGE * len / s.resolution;
        if (!px.is_empty() && covered) || len <= adjacency {
            solid[a].push(b);
            solid[b].push(a);
        }
    }
    for nb in &mut solid {
        nb.sort_unstable();
    }

    let keep = filter_edges(&st, &mut solid, params.min_group_support);

    let mut max_d: f64 = 0.0;
    let mut retained = Vec::new();
    for x in 0..n {
        if !keep[x] {
            continue;
        }
        for &p in &st.vertex_px[x] {
            max_d = max_d.max(pts[p].distance(pts[x]));
            retained.push(p);
        }
        for &y in &solid[x] {
            if x < y {
                for &p in &st.edge_px[&key(x, y)] {
                    max_d = max_d.max(point_segment_distance(pts[p], pts[x], pts[y]));
                    retained.push(p);
                }
            }
        }
    }
    retained.sort_unstable();
    report.dropped = n - retained.len();
    report.retained = retained;
    report.max_assigned_distance = max_d;

    let polylines = chain(pts, &solid, &keep);
    Ok(Extraction { polylines, report })
}

/// Edge filtering. Leaf chains (spurs ending in a degree-1 vertex) supported by fewer than
/// `min_support` pixels are pruned repeatedly; then whole connected groups below the
/// threshold are discarded. Returns the kept vertices; `solid` loses pruned edges.
fn filter_edges(st: &Simplifier, solid: &mut [Vec<usize>], min_support: usize) -> Vec<bool> {
    let n = solid.len();
    let edge_support = |a: usize, b: usize| st.edge_px.get(&key(a, b)).map_or(0, |v| v.len());
    loop {
        let mut pruned = false;
        for leaf in 0..n {
            if !st.alive[leaf] || solid[leaf].len() != 1 {
                continue;
            }
            let mut path = vec![leaf];
            let mut support = st.vertex_px[leaf].len();
            let (mut prev, mut cur) = (leaf, solid[leaf][0]);
            loop {
                support += edge_support(prev, cur);
                path.push(cur);
                if solid[cur].len() != 2 {
                    break;
                }
                support += st.vertex_px[cur].len();
                let next = if solid[cur][0] == prev { solid[cur][1] } else { solid[cur][0] };
                prev = cur;
                cur = next;
            }
            // Isolated paths are left to the group filter below.
            if solid[cur].len() == 1 || support >= min_support {
                continue;
            }
            for w in path.windows(2) {
                solid[w[0]].retain(|&y| y != w[1]);
                solid[w[1]].retain(|&y| y != w[0]);
            }
            pruned = true;
        }
        if !pruned {
            break;
        }
    }

    let mut seen = vec![false; n];
    let mut keep = vec![false; n];
    for seed in 0..n {
        if !st.alive[seed] || seen[seed] || solid[seed].is_empty() {
            continue;
        }
        let mut members = vec![seed];
        seen[seed] = true;
        let mut k = 0;
        while k < members.len() {
            let x = members[k];
            k += 1;
            for &y in &solid[x] {
                if !seen[y] {
                    seen[y] = true;
                    members.push(y);
                }
            }
        }
        let mut support: usize = members.iter().map(|&x| st.vertex_px[x].len()).sum();
        for &x in &members {
            support += solid[x].iter().filter(|&&y| x < y).map(|&y| edge_support(x, y)).sum::<usize>();
        }
        if support >= min_support {
            for &x in &members {
                keep[x] = true;
            }
        }
    }
    keep
}

/// Chains kept solid edges into maximal polylines split at vertices of degree ≠ 2;
/// remaining cycles become closed polylines.
fn chain(pts: &[Point2], solid: &[Vec<usize>], keep: &[bool]) -> PolylineSet {
    let n = pts.len();
    let deg = |x: usize| if keep[x] { solid[x].len() } else { 0 };
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut out = PolylineSet::default();

    let walk = |start: usize, first: usize, used: &mut BTreeSet<(usize, usize)>| -> Vec<usize> {
        let mut path = vec![start];
        used.insert(key(start, first));
        let mut cur = first;
        loop {
            path.push(cur);
            if cur == start || deg(cur) != 2 {
                break;
            }
            match solid[cur].iter().copied().find(|&y| !used.contains(&key(cur, y))) {
                Some(next) => {
                    used.insert(key(cur, next));
                    cur = next;
                }
                None => break,
            }
        }
        path
    };

    for x in 0..n {
        let d = deg(x);
        if d == 0 || d == 2 {
            continue;
        }
        for &y in &solid[x] {
            if !used.contains(&key(x, y)) {
                let path = walk(x, y, &mut used);
                if path.first() == path.last() {
                    let mut ring = path;
                    ring.pop();
                    out.polylines.push(Polyline::new(ring.iter().map(|&i| pts[i]).collect(), true));
                } else {
                    out.polylines.push(Polyline::new(path.iter().map(|&i| pts[i]).collect(), false));
                }
            }
        }
    }
    for x in 0..n {
        if deg(x) != 2 {
            continue;
        }
        if let Some(&y) = solid[x].iter().find(|&&y| !used.contains(&key(x, y))) {
            let mut ring = walk(x, y, &mut used);
            ring.pop();
            out.polylines.push(Polyline::new(ring.iter().map(|&i| pts[i]).collect(), ring.len() >= 3));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(points: Vec<Point2>, r: f64) -> ContourPixels {
        ContourPixels { pixels: vec![(0, 0); points.len()], points, resolution: r }
    }

    #[test]
    fn collinear_collapses_to_one_segment() {
        let pts: Vec<_> = (0..100).map(|i| Point2::new(0.1 * i as f64, 0.0)).collect();
        let ex = extract_polylines(&pixels(pts.clone(), 0.1), &OtParams::default()).unwrap();
        assert_eq!(ex.polylines.polylines.len(), 1);
        let pl = &ex.polylines.polylines[0];
        assert!(!pl.closed);
        assert_eq!(pl.points.len(), 2);
        let mut ends = [pl.points[0].x, pl.points[1].x];
        ends.sort_by(f64::total_cmp);
        assert!((ends[0] - 0.0).abs() < 1e-12 && (ends[1] - 9.9).abs() < 1e-9);
        assert_eq!(ex.report.retained.len(), 100);
        assert!(ex.polylines.hausdorff_from(&pts) <= 0.25);
    }

    #[test]
    fn noise_clusters_filtered() {
        let mut pts: Vec<_> = (0..4).map(|i| Point2::new(0.2 * i as f64, 0.0)).collect();
        pts.extend((0..4).map(|i| Point2::new(5.0 + 0.2 * i as f64, 3.0)));
        let ex = extract_polylines(&pixels(pts, 0.2), &OtParams::default()).unwrap();
        assert!(ex.polylines.polylines.is_empty());
        assert_eq!(ex.report.dropped, 8);
    }

    #[test]
    fn too_few_pixels() {
        let e = extract_polylines(&pixels(vec![Point2::new(0., 0.), Point2::new(1., 0.)], 0.2), &OtParams::default());
        assert!(matches!(e, Err(Error::TooFewPixels(2))));
    }

    #[test]
    fn transport_cost_examples() {
        let (a, b) = (Point2::new(0.0, 0.0), Point2::new(2.0, 0.0));
        // Evenly spread pixels on the segment cost nothing.
        let even = [Point2::new(0.5, 0.0), Point2::new(1.5, 0.0)];
        assert_eq!(transport_cost(a, b, &even), 0.0);
        // Offsets add squared normal distance; bunching adds tangential deviation.
        let off = [Point2::new(0.5, 0.1), Point2::new(1.5, -0.2)];
        assert!((transport_cost(a, b, &off) - 0.05).abs() < 1e-15);
        let bunched = [Point2::new(1.0, 0.0), Point2::new(1.0, 0.0)];
        assert!((transport_cost(a, b, &bunched) - 0.5).abs() < 1e-15);
    }
}
