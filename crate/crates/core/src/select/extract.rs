//! Turns a selection into a closed polygonal mesh: coplanar pieces of one source are merged
//! and redundant collinear vertices dropped.

use std::collections::{BTreeMap, HashMap};

use super::Solution;
use crate::hypothesize::{CandidateSet, FaceSource};
use crate::{Error, Point3, Result, SurfaceMesh};

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

/// Boundary ring of consistently oriented faces, if it is a single simple loop.
fn merged_ring(rings: &[&Vec<usize>]) -> Option<Vec<usize>> {
    let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in rings {
        for k in 0..r.len() {
            *directed.entry((r[k], r[(k + 1) % r.len()])).or_default() += 1;
        }
    }
    if directed.values().any(|&c| c > 1) {
        return None;
    }
    let boundary: Vec<(usize, usize)> = directed.keys().copied().filter(|&(a, b)| !directed.contains_key(&(b, a))).collect();
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in &boundary {
        if next.insert(a, b).is_some() {
            return None;
        }
    }
    let start = boundary.iter().map(|e| e.0).min()?;
    let mut ring = vec![start];
    let mut v = next[&start];
    while v != start {
        if ring.len() > boundary.len() {
            return None;
        }
        ring.push(v);
        v = *next.get(&v)?;
    }
    (ring.len() == boundary.len()).then_some(ring)
}

fn collinear(a: Point3, v: Point3, b: Point3) -> bool {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 <= 0.0 {
        return false;
    }
    let t = (v - a).dot(ab) / l2;
    t > 0.0 && t < 1.0 && (a + ab * t).distance(v) <= 1e-9 * l2.sqrt().max(1.0)
}

/// Builds the output mesh from the selected faces.
pub fn extract_mesh(cs: &CandidateSet, sol: &Solution) -> Result<SurfaceMesh> {
    let selected: Vec<usize> = (0..cs.faces.len()).filter(|&i| sol.assignment[i]).collect();
    let mut mesh = SurfaceMesh::new(cs.vertices.clone(), selected.iter().map(|&i| cs.faces[i].vertices.clone()).collect());
    mesh.orient_outward();
    let sources: Vec<FaceSource> = selected.iter().map(|&i| cs.faces[i].source).collect();

    // Union faces of one source across shared edges.
    let n = mesh.faces.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for fs in mesh.edge_table().values() {
        if fs.len() == 2 && fs[0] != fs[1] && sources[fs[0]] == sources[fs[1]] {
            let (a, b) = (find(&mut parent, fs[0]), find(&mut parent, fs[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in 0..n {
        let r = find(&mut parent, f);
        groups.entry(r).or_default().push(f);
    }
    let mut faces: Vec<Vec<usize>> = Vec::new();
    for (_, members) in groups {
        if members.len() == 1 {
            faces.push(mesh.faces[members[0]].clone());
            continue;
        }
        let rings: Vec<&Vec<usize>> = members.iter().map(|&f| &mesh.faces[f]).collect();
        match merged_ring(&rings) {
            Some(r) => faces.push(r),
            None => faces.extend(rings.into_iter().cloned()),
        }
    }

    // Drop vertices that are straight in every face using them.
    loop {
        let mut uses: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (f, r) in faces.iter().enumerate() {
            for (k, &v) in r.iter().enumerate() {
                uses.entry(v).or_default().push((f, k));
            }
        }
        let victim = uses.iter().find(|(&v, us)| {
            us.iter().all(|&(f, k)| {
                let r = &faces[f];
                let m = r.len();
                m > 3 && collinear(mesh.vertices[r[(k + m - 1) % m]], mesh.vertices[v], mesh.vertices[r[(k + 1) % m]])
            })
        });
        let Some((&v, _)) = victim else { break };
        for r in &mut faces {
            r.retain(|&x| x != v);
        }
    }

    // Compact vertices in first-use order.
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut verts = Vec::new();
    for r in &mut faces {
        for v in r.iter_mut() {
            *v = *remap.entry(*v).or_insert_with(|| {
                verts.push(mesh.vertices[*v]);
                verts.len() - 1
            });
        }
    }
    let mut out = SurfaceMesh::new(verts, faces);
    out.orient_outward();
    let out = out.finalize().map_err(|e| Error::NonManifoldResult(e.to_string()))?;
    if out.signed_volume() <= 0.0 {
        return Err(Error::NonManifoldResult("non-positive enclosed volume".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::tests::{box_set, gable_set};
    use crate::select::{build_problem, solve, SelectOptions};
    use std::time::Duration;

    #[test]
    fn box_volume_matches_footprint_times_height() {
        let cs = box_set(100);
        let p = build_problem(&cs, 100, &SelectOptions::default()).unwrap();
        let s = solve(&p, Duration::from_secs(1)).unwrap();
        let m = extract_mesh(&cs, &s).unwrap();
        assert_eq!(m.faces.len(), 6);
        assert!((m.signed_volume() - 160.0 * 6.0).abs() < 1e-6 * 960.0);
    }

    #[test]
    fn gable_has_euler_characteristic_two() {
        let cs = gable_set();
        let p = build_problem(&cs, 800, &SelectOptions::default()).unwrap();
        let s = solve(&p, Duration::from_secs(1)).unwrap();
        let m = extract_mesh(&cs, &s).unwrap();
        let (v, e, f) = (m.vertices.len() as i64, m.edge_table().len() as i64, m.faces.len() as i64);
        assert_eq!(v - e + f, 2);
        let pentagons = m.faces.iter().filter(|r| r.len() == 5).count();
        assert_eq!(pentagons, 2);
        // Volume of the analytic gable: box 16 × 10 × 5 plus prism 16 × 10 × 2.5 / 2.
        let vol = 16.0 * 10.0 * 5.0 + 16.0 * 10.0 * 2.5 / 2.0;
        assert!((m.signed_volume() - vol).abs() < 1e-6 * vol);
    }
}
