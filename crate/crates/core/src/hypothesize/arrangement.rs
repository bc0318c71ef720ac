//! Planar arrangement of 2D segments: noding, dangling-edge pruning and cell tracing.

use std::collections::{BTreeMap, HashMap};

use crate::geom::{point_segment_distance, ring_signed_area};
use crate::Point2;

/// Input segment tagged with the id of the line (wall or intersection trace) it lies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: Point2,
    pub b: Point2,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrEdge {
    pub a: usize,
    pub b: usize,
    pub line: usize,
}

/// Bounded face of the arrangement: CCW node ring and the edge behind each ring side
/// (`edges[k]` joins `ring[k]` and `ring[k + 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub ring: Vec<usize>,
    pub edges: Vec<usize>,
    pub area: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Arrangement {
    pub nodes: Vec<Point2>,
    pub edges: Vec<ArrEdge>,
    pub cells: Vec<Cell>,
    /// CCW node ring of the outer boundary.
    pub outer: Vec<usize>,
}

impl Arrangement {
    pub fn cell_points(&self, c: usize) -> Vec<Point2> {
        self.cells[c].ring.iter().map(|&i| self.nodes[i]).collect()
    }

    /// Cells on each side of every edge (one entry for boundary edges).
    pub fn edge_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.edges.len()];
        for (c, cell) in self.cells.iter().enumerate() {
            for &e in &cell.edges {
                out[e].push(c);
            }
        }
        out
    }
}

/// Welds points closer than `tol`; the first occurrence wins, so results are order-stable.
pub(crate) struct Welder {
    tol: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
    pub points: Vec<Point2>,
}

impl Welder {
    pub fn new(tol: f64) -> Self {
        Self { tol, grid: HashMap::new(), points: Vec::new() }
    }

    fn cell(&self, p: Point2) -> (i64, i64) {
        ((p.x / (4.0 * self.tol)).floor() as i64, (p.y / (4.0 * self.tol)).floor() as i64)
    }

    pub fn find(&self, p: Point2) -> Option<usize> {
        let (cx, cy) = self.cell(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &i in self.grid.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                    let d = self.points[i].distance(p);
                    if d <= self.tol && best.map_or(true, |(bd, bi)| d < bd || (d == bd && i < bi)) {
                        best = Some((d, i));
                    }
                }
            }
        }
        best.map(|b| b.1)
    }

    pub fn insert(&mut self, p: Point2) -> usize {
        if let Some(i) = self.find(p) {
            return i;
        }
        let c = self.cell(p);
        self.points.push(p);
        let i = self.points.len() - 1;
        self.grid.entry(c).or_default().push(i);
        i
    }
}

/// Proper or touching intersection point of two segments, if any (parallel pairs excluded).
fn crossing(a: Point2, b: Point2, c: Point2, d: Point2, tol: f64) -> Option<Point2> {
    let (r, s) = (b - a, d - c);
    let den = r.cross(s);
    if den.abs() <= 1e-12 * r.norm() * s.norm() {
        return None;
    }
    let t = (c - a).cross(s) / den;
    let u = (c - a).cross(r) / den;
    let (tt, tu) = (tol / r.norm(), tol / s.norm());
    if t >= -tt && t <= 1.0 + tt && u >= -tu && u <= 1.0 + tu {
        Some(a + r * t.clamp(0.0, 1.0))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrangementError {
    /// The boundary segments do not enclose a region.
    OpenBoundary,
}

/// Builds the arrangement of `segments`. Segments whose line id satisfies `is_boundary`
/// form the outer boundary; everything not connected to it, and every dangling chain, is
/// discarded. Cells smaller than `min_area` are merged into a neighbour by deleting their
/// longest interior edge.
pub fn build(segments: &[LineSegment], is_boundary: impl Fn(usize) -> bool, tol: f64, min_area: f64) -> Result<Arrangement, ArrangementError> {
    let mut welder = Welder::new(tol);
    for s in segments {
        welder.insert(s.a);
        welder.insert(s.b);
    }
    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            let (p, q) = (segments[i], segments[j]);
            if let Some(x) = crossing(p.a, p.b, q.a, q.b, tol) {
                welder.insert(x);
            }
        }
    }
    let nodes = welder.points.clone();

    // Split each segment at every node lying on it; first segment wins a shared edge.
    let mut edges: Vec<ArrEdge> = Vec::new();
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for s in segments {
        let d = s.b - s.a;
        let len2 = d.norm_squared();
        if len2 <= tol * tol {
            continue;
        }
        let mut on: Vec<(f64, usize)> = nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| point_segment_distance(**p, s.a, s.b) <= tol)
            .map(|(i, p)| ((*p - s.a).dot(d) / len2, i))
            .collect();
        on.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        on.dedup_by_key(|x| x.1);
        for w in on.windows(2) {
            let (u, v) = (w[0].1, w[1].1);
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if !seen.contains_key(&key) {
                seen.insert(key, edges.len());
                edges.push(ArrEdge { a: key.0, b: key.1, line: s.line });
            }
        }
    }

    let mut alive = vec![true; edges.len()];
    loop {
        prune(&nodes, &edges, &mut alive, &is_boundary);
        let (cells, outer, bridges) = trace(&nodes, &edges, &alive);
        if !bridges.is_empty() {
            for e in bridges {
                alive[e] = false;
            }
            continue;
        }
        let outer = outer.ok_or(ArrangementError::OpenBoundary)?;
        if let Some(tiny) = cells.iter().find(|c| c.area < min_area) {
            let victim = tiny
                .edges
                .iter()
                .copied()
                .filter(|&e| !is_boundary(edges[e].line))
                .max_by(|&x, &y| edge_len(&nodes, &edges[x]).total_cmp(&edge_len(&nodes, &edges[y])).then(y.cmp(&x)));
            match victim {
                Some(e) => {
                    alive[e] = false;
                    continue;
                }
                None => return Err(ArrangementError::OpenBoundary),
            }
        }
        // Compact: renumber live edges.
        let mut remap = vec![usize::MAX; edges.len()];
        let mut live = Vec::new();
        for (i, e) in edges.iter().enumerate() {
            if alive[i] {
                remap[i] = live.len();
                live.push(*e);
            }
        }
        let cells = cells
            .into_iter()
            .map(|c| Cell { edges: c.edges.iter().map(|&e| remap[e]).collect(), ..c })
            .collect();
        return Ok(Arrangement { nodes, edges: live, cells, outer });
    }
}

fn edge_len(nodes: &[Point2], e: &ArrEdge) -> f64 {
    nodes[e.a].distance(nodes[e.b])
}

/// Removes dangling chains and every component without a boundary edge.
fn prune(nodes: &[Point2], edges: &[ArrEdge], alive: &mut [bool], is_boundary: &impl Fn(usize) -> bool) {
    let mut deg = vec![0usize; nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        if alive[i] {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
    }
    loop {
        let mut changed = false;
        for (i, e) in edges.iter().enumerate() {
            if alive[i] && (deg[e.a] == 1 || deg[e.b] == 1) {
                alive[i] = false;
                deg[e.a] -= 1;
                deg[e.b] -= 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Components reachable from boundary edges.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        if alive[i] {
            adj[e.a].push(i);
            adj[e.b].push(i);
        }
    }
    let mut reached = vec![false; nodes.len()];
    let mut stack: Vec<usize> = edges.iter().enumerate().filter(|(i, e)| alive[*i] && is_boundary(e.line)).map(|(_, e)| e.a).collect();
    while let Some(v) = stack.pop() {
        if reached[v] {
            continue;
        }
        reached[v] = true;
        for &i in &adj[v] {
            let w = if edges[i].a == v { edges[i].b } else { edges[i].a };
            if !reached[w] {
                stack.push(w);
            }
        }
    }
    for (i, e) in edges.iter().enumerate() {
        if alive[i] && !reached[e.a] {
            alive[i] = false;
        }
    }
}

/// Traces faces; returns bounded cells, the outer ring (CCW) and edges with the same face on
/// both sides.
fn trace(nodes: &[Point2], edges: &[ArrEdge], alive: &[bool]) -> (Vec<Cell>, Option<Vec<usize>>, Vec<usize>) {
    // Outgoing half-edges per node sorted by angle (CCW).
    let mut out: Vec<Vec<(f64, usize, usize)>> = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        for (u, v) in [(e.a, e.b), (e.b, e.a)] {
            let d = nodes[v] - nodes[u];
            out[u].push((d.y.atan2(d.x), v, i));
        }
    }
    for o in &mut out {
        o.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    }
    let mut visited: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cells = Vec::new();
    let mut outer = None;
    let mut bridges = Vec::new();
    let mut face_id = 0;
    for u0 in 0..nodes.len() {
        for k0 in 0..out[u0].len() {
            let (_, v0, e0) = out[u0][k0];
            if visited.contains_key(&(u0, v0)) {
                continue;
            }
            let mut ring = Vec::new();
            let mut ring_edges = Vec::new();
            let (mut u, mut v, mut e) = (u0, v0, e0);
            loop {
                visited.insert((u, v), face_id);
                ring.push(u);
                ring_edges.push(e);
                // Next: the neighbour of v immediately clockwise from u.
                let around = &out[v];
                let pos = around.iter().position(|&(_, w, _)| w == u).expect("twin half-edge");
                let (_, w, ew) = around[(pos + around.len() - 1) % around.len()];
                u = v;
                v = w;
                e = ew;
                if u == u0 && v == v0 {
                    break;
                }
            }
            face_id += 1;
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &x in &ring_edges {
                *counts.entry(x).or_default() += 1;
            }
            let mut twice: Vec<usize> = counts.into_iter().filter(|&(_, c)| c > 1).map(|(x, _)| x).collect();
            twice.sort_unstable();
            if !twice.is_empty() {
                bridges.extend(twice);
                continue;
            }
            let pts: Vec<Point2> = ring.iter().map(|&i| nodes[i]).collect();
            let area = ring_signed_area(&pts);
            if area > 0.0 {
                cells.push(Cell { ring, edges: ring_edges, area });
            } else if outer.is_none() {
                let mut r = ring;
                r.reverse();
                outer = Some(r);
            } else {
                // A second negative face means a detached component; treat it as open.
                return (Vec::new(), None, Vec::new());
            }
        }
    }
    bridges.sort_unstable();
    bridges.dedup();
    (cells, outer, bridges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn square(n: usize) -> Vec<LineSegment> {
        let c = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        (0..4).map(|i| LineSegment { a: c[i], b: c[(i + 1) % 4], line: n + i }).collect()
    }

    #[test]
    fn square_is_one_cell() {
        let a = build(&square(0), |l| l < 4, 1e-6, 1e-4).unwrap();
        assert_eq!(a.cells.len(), 1);
        assert!((a.cells[0].area - 100.0).abs() < 1e-9);
        assert_eq!(a.outer.len(), 4);
    }

    #[test]
    fn cross_gives_four_cells_and_spur_is_pruned() {
        let mut s = square(0);
        s.push(LineSegment { a: p(5.0, 0.0), b: p(5.0, 10.0), line: 4 });
        s.push(LineSegment { a: p(0.0, 5.0), b: p(10.0, 5.0), line: 5 });
        s.push(LineSegment { a: p(2.0, 2.0), b: p(3.0, 3.0), line: 6 });
        s.push(LineSegment { a: p(7.0, 5.0), b: p(7.0, 6.0), line: 7 });
        let a = build(&s, |l| l < 4, 1e-6, 1e-4).unwrap();
        assert_eq!(a.cells.len(), 4);
        let total: f64 = a.cells.iter().map(|c| c.area).sum();
        assert!((total - 100.0).abs() < 1e-9);
        assert!(a.edges.iter().all(|e| e.line != 6 && e.line != 7));
    }

    #[test]
    fn sliver_cell_is_merged() {
        let mut s = square(0);
        s.push(LineSegment { a: p(0.0, 0.000001), b: p(10.0, 0.000005), line: 4 });
        let a = build(&s, |l| l < 4, 1e-7, 1e-4).unwrap();
        assert_eq!(a.cells.len(), 1);
    }

    #[test]
    fn open_boundary_is_reported() {
        let s = square(0)[..3].to_vec();
        assert_eq!(build(&s, |l| l < 4, 1e-6, 1e-4), Err(ArrangementError::OpenBoundary));
    }
}
