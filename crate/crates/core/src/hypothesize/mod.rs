//! Candidate faces: roof planes lifted over a common 2D arrangement of boundary, inner wall
//! and roof-intersection traces, wall pieces between consecutive roof lines, and a ground face.

pub mod arrangement;
pub mod overlap;
pub mod support;
pub mod traces;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geom::{point_segment_distance, polygon3_area, MIN_POLYGON_AREA, SNAP_TOLERANCE};
use crate::plane_detect::{PlanarSegment, SegmentKind};
use crate::wall_infer::VerticalPlaneSet;
use crate::{Error, Plane, Point2, Point3, Polygon2, Result, Vector3};

pub use arrangement::Arrangement;
pub use support::{compute_support, compute_vertical_groups, designate_priors, write_candidates_obj};
pub use traces::{Trace, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceKind {
    Roof,
    Wall,
    Ground,
}

/// What a candidate face lies on: a roof segment, the vertical plane through a trace, or the
/// ground. Adjacent selected faces with different sources form a crease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceSource {
    Roof(usize),
    Wall(usize),
    Ground,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFace {
    pub id: usize,
    pub polygon: Vec<Point3>,
    /// Indices into `CandidateSet::vertices`, parallel to `polygon` (T-junctions included).
    pub vertices: Vec<usize>,
    pub plane: Plane,
    pub source: FaceSource,
    pub kind: FaceKind,
    pub support: usize,
    /// Height of the area centroid.
    pub centroid_z: f64,
    pub area: f64,
    /// Arrangement cell under a roof face.
    pub cell: Option<usize>,
    /// Arrangement edge under a wall face.
    pub edge: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateEdge {
    pub a: usize,
    pub b: usize,
    pub faces: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub vertices: Vec<Point3>,
    pub faces: Vec<CandidateFace>,
    pub edges: Vec<CandidateEdge>,
    /// Per face: roof faces overlapping it in vertical projection (itself included); empty
    /// for walls and the ground.
    pub vertical_groups: Vec<Vec<usize>>,
    /// Roof faces per roof segment.
    pub segment_faces: BTreeMap<usize, Vec<usize>>,
    /// Most confident face per roof segment.
    pub priors: BTreeMap<usize, usize>,
    pub traces: Vec<Trace>,
    pub arrangement: Arrangement,
    pub z_ground: f64,
    pub z_top: f64,
}

impl CandidateSet {
    pub fn ground_face(&self) -> Option<usize> {
        self.faces.iter().position(|f| f.kind == FaceKind::Ground)
    }

    pub fn roof_faces(&self) -> impl Iterator<Item = &CandidateFace> {
        self.faces.iter().filter(|f| f.kind == FaceKind::Roof)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisParams {
    /// Roof candidates may rise this far above the highest point (m).
    pub z_margin: f64,
    /// Roof candidates must stay this far above the ground (m).
    pub min_height: f64,
    /// Free ends of inner traces are extended up to this far (m).
    pub extend: f64,
    pub min_inner_length: f64,
    pub inner_gap: f64,
    /// Intersection traces this close to an existing trace are dropped (m).
    pub sliver_tol: f64,
    /// Heights of different planes closer than this at a node are merged (m).
    pub height_snap: f64,
    /// Minimum projected overlap for two roof faces to share a vertical group (m²).
    pub min_overlap_area: f64,
}

impl Default for HypothesisParams {
    fn default() -> Self {
        Self { z_margin: 0.5, min_height: 0.5, extend: 3.0, min_inner_length: 1.0, inner_gap: 2.5, sliver_tol: 0.05, height_snap: 0.05, min_overlap_area: 1e-3 }
    }
}

/// 3D vertex welder on a hash grid; first occurrence wins.
struct Welder3 {
    tol: f64,
    grid: HashMap<(i64, i64, i64), Vec<usize>>,
    points: Vec<Point3>,
}

impl Welder3 {
    fn new(tol: f64) -> Self {
        Self { tol, grid: HashMap::new(), points: Vec::new() }
    }

    fn key(&self, p: Point3) -> (i64, i64, i64) {
        let s = 4.0 * self.tol;
        ((p.x / s).floor() as i64, (p.y / s).floor() as i64, (p.z / s).floor() as i64)
    }

    fn insert(&mut self, p: Point3) -> usize {
        let (cx, cy, cz) = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    for &i in self.grid.get(&(cx + dx, cy + dy, cz + dz)).into_iter().flatten() {
                        let d = self.points[i].distance(p);
                        if d <= self.tol && best.map_or(true, |(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        self.points.push(p);
        let i = self.points.len() - 1;
        self.grid.entry((cx, cy, cz)).or_default().push(i);
        i
    }
}

/// Splits a convex polygon in the (t, z) strip by the line `z = h0 + (h1 - h0)·t`.
fn split_by_line(poly: &[(f64, f64)], h0: f64, h1: f64) -> Vec<Vec<(f64, f64)>> {
    let f = |p: (f64, f64)| p.1 - (h0 + (h1 - h0) * p.0);
    let mut below = Vec::new();
    let mut above = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fp, fq) = (f(p), f(q));
        if fp <= 0.0 {
            below.push(p);
        }
        if fp >= 0.0 {
            above.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let a = fp / (fp - fq);
            let x = if p.0 == q.0 { (p.0, p.1 + (q.1 - p.1) * a) } else { (p.0 + (q.0 - p.0) * a, p.1 + (q.1 - p.1) * a) };
            below.push(x);
            above.push(x);
        }
    }
    let area = |r: &[(f64, f64)]| {
        let n = r.len();
        (0..n).map(|i| r[i].0 * r[(i + 1) % n].1 - r[(i + 1) % n].0 * r[i].1).sum::<f64>() / 2.0
    };
    let (ab, aa) = (area(&below), area(&above));
    if below.len() < 3 || above.len() < 3 || aa.abs() <= 1e-12 || ab.abs() <= 1e-12 {
        return vec![poly.to_vec()];
    }
    vec![below, above]
}

fn area_centroid_z(poly: &[Point3]) -> f64 {
    // Signed fan weights keep non-convex polygons exact.
    let n = crate::geom::newell_normal(poly).normalized();
    let mut wsum = 0.0;
    let mut zsum = 0.0;
    for k in 1..poly.len().saturating_sub(1) {
        let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
        let w = (b - a).cross(c - a).dot(n) / 2.0;
        wsum += w;
        zsum += w * (a.z + b.z + c.z) / 3.0;
    }
    if wsum.abs() > 0.0 {
        zsum / wsum
    } else {
        poly.iter().map(|p| p.z).sum::<f64>() / poly.len().max(1) as f64
    }
}

struct RawFace {
    polygon: Vec<Point3>,
    plane: Plane,
    source: FaceSource,
    kind: FaceKind,
    cell: Option<usize>,
    edge: Option<usize>,
}

/// Builds the candidate set of one building. `roofs` indexes roof segments (vertical ones are
/// ignored); inner traces come from `walls`, the outer walls from `boundary`'s edges.
pub fn build_arrangement(roofs: &[PlanarSegment], walls: &VerticalPlaneSet, boundary: &Polygon2, z_ground: f64, z_max: f64, params: &HypothesisParams) -> Result<CandidateSet> {
    let roof_ids: Vec<usize> = (0..roofs.len()).filter(|&i| roofs[i].kind == SegmentKind::Roof).collect();
    if roof_ids.is_empty() {
        return Err(Error::NoRoofPlanes);
    }
    let planes: Vec<Plane> = roof_ids.iter().map(|&i| roofs[i].plane).collect();
    let ring = boundary.outer().to_vec();
    let (z_lo, z_hi) = (z_ground + params.min_height, z_max + params.z_margin);

    let mut all: Vec<Trace> = (0..ring.len()).map(|i| Trace { a: ring[i], b: ring[(i + 1) % ring.len()], kind: TraceKind::Boundary }).collect();
    let inner_raw: Vec<(Point2, Point2)> = walls.inner().map(|w| w.trace).collect();
    let intersections = traces::roof_intersections(&planes, &ring, z_lo, z_hi, &all, params.sliver_tol);
    let inner_params = traces::InnerParams { gap: params.inner_gap, min_length: params.min_inner_length, extend: params.extend, merge_dist: 0.3 };
    let inner = traces::consolidate_inner(&inner_raw, &ring, &intersections, &inner_params);
    all.extend(inner);
    all.extend(intersections);

    let segs: Vec<arrangement::LineSegment> = all.iter().enumerate().map(|(i, t)| arrangement::LineSegment { a: t.a, b: t.b, line: i }).collect();
    // Nodes closer than the sliver tolerance are welded so that near-misses at corners do not
    // leave centimetre stubs.
    let arr = arrangement::build(&segs, |l| all[l].kind == TraceKind::Boundary, params.sliver_tol, MIN_POLYGON_AREA).map_err(|_| Error::OpenBoundary)?;

    // Roof candidates: every plane over every cell where it stays within the height band.
    let mut raw: Vec<RawFace> = Vec::new();
    let mut cell_planes: Vec<Vec<usize>> = vec![Vec::new(); arr.cells.len()];
    for (c, cell_planes_c) in cell_planes.iter_mut().enumerate() {
        let pts = arr.cell_points(c);
        let heights: Vec<Option<Vec<f64>>> = planes.iter().map(|pl| pts.iter().map(|p| pl.z_at(p.x, p.y)).collect()).collect();
        for (k, h) in heights.iter().enumerate() {
            if let Some(h) = h {
                if h.iter().all(|&z| z >= z_lo && z <= z_hi) {
                    cell_planes_c.push(k);
                }
            }
        }
        if cell_planes_c.is_empty() {
            // Least-violating plane that still stays above the ground.
            let viol = |h: &[f64]| h.iter().map(|&z| (z_lo - z).max(0.0) + (z - z_hi).max(0.0)).sum::<f64>();
            let best = heights
                .iter()
                .enumerate()
                .filter_map(|(k, h)| h.as_ref().filter(|h| h.iter().all(|&z| z > z_ground + 1e-3)).map(|h| (viol(h), k)))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            if let Some((_, k)) = best {
                cell_planes_c.push(k);
            }
        }
    }

    // Heights of the candidate planes at every node, snapped so that values closer than
    // `height_snap` coincide; otherwise lines meeting almost at a node leave sliver walls.
    let mut node_z: HashMap<(usize, usize), f64> = HashMap::new();
    let mut node_planes: Vec<Vec<usize>> = vec![Vec::new(); arr.nodes.len()];
    for (c, cell) in arr.cells.iter().enumerate() {
        for &v in &cell.ring {
            node_planes[v].extend_from_slice(&cell_planes[c]);
        }
    }
    for (v, ks) in node_planes.iter_mut().enumerate() {
        ks.sort_unstable();
        ks.dedup();
        let p = arr.nodes[v];
        let mut zs: Vec<(f64, usize)> = ks.iter().filter_map(|&k| planes[k].z_at(p.x, p.y).map(|z| (z, k))).collect();
        zs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut anchor = f64::NEG_INFINITY;
        let mut prev = f64::NEG_INFINITY;
        for (z, k) in zs {
            if z - prev > params.height_snap {
                anchor = z;
            }
            prev = z;
            node_z.insert((v, k), anchor);
        }
    }
    for (c, cell) in arr.cells.iter().enumerate() {
        for &k in &cell_planes[c] {
            raw.push(RawFace {
                polygon: cell.ring.iter().map(|&v| arr.nodes[v].with_z(node_z[&(v, k)])).collect(),
                plane: planes[k],
                source: FaceSource::Roof(roof_ids[k]),
                kind: FaceKind::Roof,
                cell: Some(c),
                edge: None,
            });
        }
    }
    let z_top = raw.iter().flat_map(|f| f.polygon.iter().map(|p| p.z)).fold(z_ground, f64::max) + 1.0;

    // Wall candidates: the vertical strip over each arrangement edge cut by the roof lines
    // of the adjacent cells.
    let edge_cells = arr.edge_cells();
    for (e, edge) in arr.edges.iter().enumerate() {
        let (a, b) = (arr.nodes[edge.a], arr.nodes[edge.b]);
        let interior = edge_cells[e].len() > 1;
        let mut ks: Vec<usize> = edge_cells[e].iter().flat_map(|&c| cell_planes[c].iter().copied()).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut lines: Vec<(f64, f64)> = Vec::new();
        for k in ks {
            let (Some(&h0), Some(&h1)) = (node_z.get(&(edge.a, k)), node_z.get(&(edge.b, k))) else { continue };
            if !lines.iter().any(|l| (l.0 - h0).abs() < 1e-9 && (l.1 - h1).abs() < 1e-9) {
                lines.push((h0, h1));
            }
        }
        let mut pieces = vec![vec![(0.0, z_ground), (1.0, z_ground), (1.0, z_top), (0.0, z_top)]];
        for &(h0, h1) in &lines {
            pieces = pieces.iter().flat_map(|p| split_by_line(p, h0, h1)).collect();
        }
        let Some(wall_plane) = wall_plane(a, b, z_ground) else { continue };
        for p in pieces {
            let top = p.iter().any(|q| q.1 >= z_top - 1e-9);
            let bottom = p.iter().any(|q| q.1 <= z_ground + 1e-9);
            if top || (interior && bottom) {
                continue;
            }
            let polygon = p
                .iter()
                .map(|&(t, z)| {
                    let xy = if t == 0.0 {
                        a
                    } else if t == 1.0 {
                        b
                    } else {
                        a + (b - a) * t
                    };
                    xy.with_z(z)
                })
                .collect();
            raw.push(RawFace { polygon, plane: wall_plane, source: FaceSource::Wall(edge.line), kind: FaceKind::Wall, cell: None, edge: Some(e) });
        }
    }

    raw.push(RawFace {
        polygon: arr.outer.iter().map(|&i| arr.nodes[i].with_z(z_ground)).collect(),
        plane: Plane::horizontal(z_ground),
        source: FaceSource::Ground,
        kind: FaceKind::Ground,
        cell: None,
        edge: None,
    });

    let (vertices, faces) = weld_faces(raw);
    let edges = edge_table(&faces);
    let mut segment_faces: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &faces {
        if let FaceSource::Roof(s) = f.source {
            segment_faces.entry(s).or_default().push(f.id);
        }
    }
    Ok(CandidateSet {
        vertices,
        faces,
        edges,
        vertical_groups: Vec::new(),
        segment_faces,
        priors: BTreeMap::new(),
        traces: all,
        arrangement: arr,
        z_ground,
        z_top,
    })
}

fn wall_plane(a: Point2, b: Point2, z: f64) -> Option<Plane> {
    let n = (b - a).perp();
    Plane::from_point_normal(a.with_z(z), Vector3::new(n.x, n.y, 0.0)).ok()
}

/// Welds vertices, inserts T-junction vertices into face edges and drops degenerate faces.
fn weld_faces(raw: Vec<RawFace>) -> (Vec<Point3>, Vec<CandidateFace>) {
    let mut welder = Welder3::new(SNAP_TOLERANCE);
    let mut rings: Vec<Vec<usize>> = raw.iter().map(|f| f.polygon.iter().map(|&p| welder.insert(p)).collect()).collect();
    let verts = welder.points;
    for ring in &mut rings {
        ring.dedup();
        while ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
    }

    // T-junctions: vertices lying on the interior of a face edge.
    let tol = SNAP_TOLERANCE;
    let on_edge = |p: Point3, a: Point3, b: Point3| -> Option<f64> {
        let d = b - a;
        let l2 = d.norm_squared();
        if l2 <= tol * tol {
            return None;
        }
        let t = (p - a).dot(d) / l2;
        if t <= 0.0 || t >= 1.0 {
            return None;
        }
        let q = a + d * t;
        (q.distance(p) <= tol && p.distance(a) > tol && p.distance(b) > tol).then_some(t)
    };
    for ring in &mut rings {
        let mut out = Vec::with_capacity(ring.len());
        for k in 0..ring.len() {
            let (u, v) = (ring[k], ring[(k + 1) % ring.len()]);
            out.push(u);
            let (a, b) = (verts[u], verts[v]);
            let (lo, hi) = (
                Point3::new(a.x.min(b.x) - tol, a.y.min(b.y) - tol, a.z.min(b.z) - tol),
                Point3::new(a.x.max(b.x) + tol, a.y.max(b.y) + tol, a.z.max(b.z) + tol),
            );
            let mut mids: Vec<(f64, usize)> = verts
                .iter()
                .enumerate()
                .filter(|&(w, p)| w != u && w != v && p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z)
                .filter_map(|(w, p)| on_edge(*p, a, b).map(|t| (t, w)))
                .collect();
            mids.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            out.extend(mids.into_iter().map(|m| m.1));
        }
        *ring = out;
    }

    let mut faces = Vec::new();
    for (f, ring) in raw.into_iter().zip(rings) {
        if ring.len() < 3 {
            continue;
        }
        let mut sorted = ring.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ring.len() {
            continue;
        }
        let polygon: Vec<Point3> = ring.iter().map(|&i| verts[i]).collect();
        let area = polygon3_area(&polygon);
        if area < MIN_POLYGON_AREA {
            continue;
        }
        let id = faces.len();
        faces.push(CandidateFace {
            id,
            centroid_z: area_centroid_z(&polygon),
            polygon,
            vertices: ring,
            plane: f.plane,
            source: f.source,
            kind: f.kind,
            support: 0,
            area,
            cell: f.cell,
            edge: f.edge,
        });
    }
    (verts, faces)
}

fn edge_table(faces: &[CandidateFace]) -> Vec<CandidateEdge> {
    let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for f in faces {
        let n = f.vertices.len();
        for k in 0..n {
            map.entry(crate::geom::edge_key(f.vertices[k], f.vertices[(k + 1) % n])).or_default().push(f.id);
        }
    }
    map.into_iter()
        .map(|((a, b), mut fs)| {
            fs.dedup();
            CandidateEdge { a, b, faces: fs }
        })
        .collect()
}

/// Builds the candidate set and attributes it: support, vertical groups and priors.
pub fn hypothesize(
    roofs: &[PlanarSegment],
    walls: &VerticalPlaneSet,
    boundary: &Polygon2,
    cloud: &crate::ingest::PointCloud,
    z_ground: f64,
    z_max: f64,
    dist_tol: f64,
    angle_tol_deg: f64,
    params: &HypothesisParams,
) -> Result<CandidateSet> {
    let mut cs = build_arrangement(roofs, walls, boundary, z_ground, z_max, params)?;
    compute_support(&mut cs.faces, cloud, dist_tol, angle_tol_deg);
    cs.vertical_groups = compute_vertical_groups(&cs.faces, params.min_overlap_area);
    cs.priors = designate_priors(&cs.faces, &cs.segment_faces);
    Ok(cs)
}

/// Distance from `p` to the nearest trace, for diagnostics.
pub fn trace_distance(traces: &[Trace], p: Point2) -> f64 {
    traces.iter().map(|t| point_segment_distance(p, t.a, t.b)).fold(f64::INFINITY, f64::min)
}
