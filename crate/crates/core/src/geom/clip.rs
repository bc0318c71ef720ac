use super::{newell_normal, Plane, Point2, Point3, Scalar, Vector3};

/// Which closed half-space of a cutting plane to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    /// `n · p + d ≤ 0`
    Negative,
    /// `n · p + d ≥ 0`
    Positive,
}

impl Keep {
    pub fn opposite(self) -> Self {
        match self {
            Keep::Negative => Keep::Positive,
            Keep::Positive => Keep::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Vertex,
    Exit,
    Entry,
}

/// Intersects a simple planar polygon with a closed half-space.
///
/// Non-convex faces may fall apart into several components; each is returned as
/// its own ring. Vertices lying on the cut plane are preserved exactly once.
pub fn clip_polygon_by_halfplane<T: Scalar>(face: &[Point3<T>], cut: &Plane<T>, keep: Keep) -> Vec<Vec<Point3<T>>> {
    let n = face.len();
    if n < 3 {
        return Vec::new();
    }
    let eps = T::lit(1e-9);
    let sign = match keep {
        Keep::Negative => -T::one(),
        Keep::Positive => T::one(),
    };
    let s: Vec<T> = face.iter().map(|&p| cut.signed_distance(p) * sign).collect();
    let on: Vec<bool> = s.iter().map(|v| v.abs() <= eps).collect();
    if on.iter().all(|&b| b) {
        return vec![face.to_vec()];
    }
    // On-plane vertices only count as kept when they border the kept side.
    let mut inside: Vec<bool> = s.iter().map(|&v| v >= -eps).collect();
    for i in 0..n {
        if !on[i] {
            continue;
        }
        let mut j = (i + n - 1) % n;
        while on[j] {
            j = (j + n - 1) % n;
        }
        let mut k = (i + 1) % n;
        while on[k] {
            k = (k + 1) % n;
        }
        if s[j] < -eps && s[k] < -eps {
            inside[i] = false;
        }
    }
    if inside.iter().all(|&b| b) {
        return vec![face.to_vec()];
    }
    if inside.iter().all(|&b| !b) {
        return Vec::new();
    }

    let mut nodes: Vec<(Point3<T>, NodeKind)> = Vec::with_capacity(n + 4);
    for i in 0..n {
        let j = (i + 1) % n;
        if inside[i] {
            nodes.push((face[i], NodeKind::Vertex));
        }
        if inside[i] != inside[j] {
            let x = if on[i] {
                face[i]
            } else if on[j] {
                face[j]
            } else {
                let t = s[i] / (s[i] - s[j]);
                face[i].lerp(face[j], t)
            };
            nodes.push((x, if inside[i] { NodeKind::Exit } else { NodeKind::Entry }));
        }
    }

    let dir: Vector3<T> = newell_normal(face).cross(cut.normal());
    let mut crossings: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].1 != NodeKind::Vertex).collect();
    crossings.sort_by(|&a, &b| {
        dir.dot(nodes[a].0)
            .partial_cmp(&dir.dot(nodes[b].0))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut partner = vec![usize::MAX; nodes.len()];
    for pair in crossings.chunks(2) {
        if let [a, b] = *pair {
            let (exit, entry) = match (nodes[a].1, nodes[b].1) {
                (NodeKind::Exit, NodeKind::Entry) => (a, b),
                (NodeKind::Entry, NodeKind::Exit) => (b, a),
                _ => continue,
            };
            partner[exit] = entry;
        }
    }
    // Unpaired exits fall back to the next entry in ring order.
    let m = nodes.len();
    for i in 0..m {
        if nodes[i].1 == NodeKind::Exit && partner[i] == usize::MAX {
            let mut k = (i + 1) % m;
            while nodes[k].1 != NodeKind::Entry {
                k = (k + 1) % m;
            }
            partner[i] = k;
        }
    }

    let mut visited = vec![false; m];
    let mut out = Vec::new();
    for start in 0..m {
        if visited[start] || nodes[start].1 == NodeKind::Exit {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        let mut guard = 0;
        loop {
            guard += 1;
            if guard > 4 * m {
                break;
            }
            visited[cur] = true;
            ring.push(nodes[cur].0);
            let next = if nodes[cur].1 == NodeKind::Exit { partner[cur] } else { (cur + 1) % m };
            if next == start || visited[next] {
                break;
            }
            cur = next;
        }
        let ring = dedupe_ring(ring, eps);
        if ring.len() >= 3 {
            out.push(ring);
        }
    }
    out
}

fn dedupe_ring<T: Scalar>(ring: Vec<Point3<T>>, eps: T) -> Vec<Point3<T>> {
    let mut out: Vec<Point3<T>> = Vec::with_capacity(ring.len());
    for p in ring {
        if out.last().map_or(true, |q: &Point3<T>| q.distance(p) > eps) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].distance(*out.last().unwrap()) <= eps {
        out.pop();
    }
    out
}

/// 2D variant: keeps the part of `ring` with `normal · (p − origin) ≤ 0` (Negative)
/// or `≥ 0` (Positive).
pub fn clip_ring_by_line<T: Scalar>(
    ring: &[Point2<T>],
    origin: Point2<T>,
    normal: Point2<T>,
    keep: Keep,
) -> Vec<Vec<Point2<T>>> {
    let raw = Vector3::new(normal.x, normal.y, T::zero());
    let plane = Plane::new(raw, -(normal.x * origin.x + normal.y * origin.y)).expect("non-zero line normal");
    // Canonicalization may have flipped the normal.
    let keep = if plane.normal().dot(raw) < T::zero() { keep.opposite() } else { keep };
    let face: Vec<Point3<T>> = ring.iter().map(|p| p.with_z(T::zero())).collect();
    clip_polygon_by_halfplane(&face, &plane, keep)
        .into_iter()
        .map(|r| r.into_iter().map(|p| p.xy()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::polygon3_area;
    use super::*;

    type P = Point3<f64>;

    fn unit_square() -> Vec<P> {
        vec![P::new(0., 0., 0.), P::new(1., 0., 0.), P::new(1., 1., 0.), P::new(0., 1., 0.)]
    }

    #[test]
    fn half_square() {
        let cut = Plane::new(P::new(1., 0., 0.), -0.5).unwrap();
        let r = clip_polygon_by_halfplane(&unit_square(), &cut, Keep::Negative);
        assert_eq!(r.len(), 1);
        assert!((polygon3_area(&r[0]) - 0.5).abs() < 1e-12);
        assert!(r[0].iter().all(|p| p.x <= 0.5 + 1e-12));
    }

    #[test]
    fn fully_kept_is_unchanged() {
        let cut = Plane::new(P::new(1., 0., 0.), -5.0).unwrap();
        let r = clip_polygon_by_halfplane(&unit_square(), &cut, Keep::Negative);
        assert_eq!(r, vec![unit_square()]);
        assert!(clip_polygon_by_halfplane(&unit_square(), &cut, Keep::Positive).is_empty());
    }

    #[test]
    fn on_plane_vertex_kept_once() {
        let cut = Plane::new(P::new(1., 0., 0.), -1.0).unwrap();
        let tri = vec![P::new(0., 0., 0.), P::new(1., 0.5, 0.), P::new(0., 1., 0.)];
        let r = clip_polygon_by_halfplane(&tri, &cut, Keep::Negative);
        assert_eq!(r, vec![tri.clone()]);
        // Touching from outside yields nothing.
        assert!(clip_polygon_by_halfplane(&tri, &cut, Keep::Positive).is_empty());
    }

    fn u_shape() -> Vec<P> {
        // A U opening upward: notch between x in [1,2] above y = 1.
        vec![
            P::new(0., 0., 0.),
            P::new(3., 0., 0.),
            P::new(3., 3., 0.),
            P::new(2., 3., 0.),
            P::new(2., 1., 0.),
            P::new(1., 1., 0.),
            P::new(1., 3., 0.),
            P::new(0., 3., 0.),
        ]
    }

    /// Per-component oracle: clip each convex arm separately with a convex clipper.
    fn convex_clip_area(poly: &[P], y: f64) -> f64 {
        let mut out = Vec::new();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (ia, ib) = (a.y >= y, b.y >= y);
            if ia {
                out.push(a);
            }
            if ia != ib {
                let t = (y - a.y) / (b.y - a.y);
                out.push(a.lerp(b, t));
            }
        }
        polygon3_area(&out)
    }

    #[test]
    fn notch_cut_gives_two_components() {
        let cut = Plane::new(P::new(0., 1., 0.), -2.0).unwrap();
        let r = clip_polygon_by_halfplane(&u_shape(), &cut, Keep::Positive);
        assert_eq!(r.len(), 2);
        let left = vec![P::new(0., 1., 0.), P::new(1., 1., 0.), P::new(1., 3., 0.), P::new(0., 3., 0.)];
        let right = vec![P::new(2., 1., 0.), P::new(3., 1., 0.), P::new(3., 3., 0.), P::new(2., 3., 0.)];
        let expected = [convex_clip_area(&left, 2.0), convex_clip_area(&right, 2.0)];
        let mut got: Vec<f64> = r.iter().map(|c| polygon3_area(c)).collect();
        got.sort_by(f64::total_cmp);
        assert!((got[0] - expected[0]).abs() < 1e-12 && (got[1] - expected[1]).abs() < 1e-12);
        let rest = clip_polygon_by_halfplane(&u_shape(), &cut, Keep::Negative);
        assert_eq!(rest.len(), 1);
        let total: f64 = got.iter().sum::<f64>() + polygon3_area(&rest[0]);
        assert!((total - polygon3_area(&u_shape())).abs() < 1e-12);
    }

    #[test]
    fn ring_by_line_respects_orientation() {
        let sq: Vec<Point2<f64>> = unit_square().iter().map(|p| p.xy()).collect();
        let r = clip_ring_by_line(&sq, Point2::new(0.25, 0.0), Point2::new(-1.0, 0.0), Keep::Negative);
        assert_eq!(r.len(), 1);
        assert!(r[0].iter().all(|p| p.x >= 0.25 - 1e-12));
    }
}
