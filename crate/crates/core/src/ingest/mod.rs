//! Input point clouds and footprints, and their split into per-building instances.

mod footprints;
mod points;

use std::collections::{BTreeMap, HashSet};

use rstar::primitives::{GeomWithData, Rectangle};
use rstar::RTree;
use serde::{Deserialize, Serialize};

pub use footprints::{load_footprints, parse_geojson, parse_wkt_lines, FootprintFormat};
pub use points::{load_point_cloud, parse_xyz, save_ply, write_ply, PointFormat};

use crate::error::{Error, Result};
use crate::geom::Location;
use crate::{Point3, Polygon2, Vector3};

/// Buildings with fewer points are skipped.
pub const MIN_BUILDING_POINTS: usize = 30;
/// Width of the band outside a footprint sampled for the ground elevation.
pub const GROUND_BAND: f64 = 2.0;
/// Quantile of z used as ground elevation.
pub const GROUND_QUANTILE: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Vector3>>,
    pub instance_ids: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self { points, normals: None, instance_ids: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-cloud of the given indices, carrying normals and ids along.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
            instance_ids: self.instance_ids.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn z_range(&self) -> Option<(f64, f64)> {
        let mut it = self.points.iter().map(|p| p.z);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), z| (lo.min(z), hi.max(z))))
    }

    /// Appends `other`; optional attributes survive only when both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let was_empty = self.is_empty();
        self.points.extend_from_slice(&other.points);
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.instance_ids = match (self.instance_ids.take(), &other.instance_ids) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub id: String,
    pub polygon: Polygon2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FootprintSet {
    pub footprints: Vec<Footprint>,
}

impl FootprintSet {
    pub fn new(footprints: Vec<Footprint>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &footprints {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::InvalidGeometry { feature: f.id.clone(), message: "duplicate footprint id".into() });
            }
        }
        Ok(Self { footprints })
    }

    pub fn len(&self) -> usize {
        self.footprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.footprints.is_empty()
    }

    /// GeoJSON FeatureCollection, one Polygon feature per footprint.
    pub fn to_geojson(&self) -> String {
        let features: Vec<serde_json::Value> = self
            .footprints
            .iter()
            .map(|f| {
                let ring = |r: &[crate::Point2]| {
                    let mut c: Vec<[f64; 2]> = r.iter().map(|p| [p.x, p.y]).collect();
                    c.push([r[0].x, r[0].y]);
                    c
                };
                let rings: Vec<Vec<[f64; 2]>> = f.polygon.rings().map(ring).collect();
                serde_json::json!({
                    "type": "Feature",
                    "id": f.id,
                    "properties": {},
                    "geometry": {"type": "Polygon", "coordinates": rings},
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({"type": "FeatureCollection", "features": features}))
            .expect("json serialization")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingInstance {
    pub id: String,
    pub cloud: PointCloud,
    pub footprint: Option<Polygon2>,
    pub z_ground: f64,
}

impl BuildingInstance {
    pub fn z_max(&self) -> f64 {
        self.cloud.z_range().map_or(self.z_ground, |r| r.1)
    }
}

/// Result of splitting a scene: reconstructable instances plus skipped ids with their counts.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub instances: Vec<BuildingInstance>,
    pub skipped: Vec<(String, usize)>,
}

/// Linear-interpolation quantile of unsorted values (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Assigns each point to the first footprint (file order) whose polygon contains its
/// projection, boundary included. Unclaimed points are dropped.
pub fn split_by_footprints(cloud: &PointCloud, fps: &FootprintSet) -> Split {
    let boxes: Vec<GeomWithData<Rectangle<[f64; 2]>, usize>> = fps
        .footprints
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (lo, hi) = f.polygon.bounds();
            GeomWithData::new(Rectangle::from_corners([lo.x, lo.y], [hi.x, hi.y]), i)
        })
        .collect();
    let tree = RTree::bulk_load(boxes.clone());
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); fps.len()];
    for (pi, p) in cloud.points.iter().enumerate() {
        let owner = tree
            .locate_all_at_point(&[p.x, p.y])
            .map(|g| g.data)
            .filter(|&fi| fps.footprints[fi].polygon.locate(p.xy()) != Location::Outside)
            .min();
        if let Some(fi) = owner {
            members[fi].push(pi);
        }
    }

    // Ground band candidates: points near but outside each footprint.
    let expanded: Vec<_> = boxes
        .iter()
        .map(|g| {
            let lo = g.geom().lower();
            let hi = g.geom().upper();
            GeomWithData::new(
                Rectangle::from_corners([lo[0] - GROUND_BAND, lo[1] - GROUND_BAND], [hi[0] + GROUND_BAND, hi[1] + GROUND_BAND]),
                g.data,
            )
        })
        .collect();
    let band_tree = RTree::bulk_load(expanded);
    let mut band_z: Vec<Vec<f64>> = vec![Vec::new(); fps.len()];
    for p in &cloud.points {
        for g in band_tree.locate_all_at_point(&[p.x, p.y]) {
            let poly = &fps.footprints[g.data].polygon;
            if poly.locate(p.xy()) == Location::Outside && poly.boundary_distance(p.xy()) <= GROUND_BAND {
                band_z[g.data].push(p.z);
            }
        }
    }

    let mut split = Split::default();
    for (fi, idx) in members.into_iter().enumerate() {
        let fp = &fps.footprints[fi];
        if idx.len() < MIN_BUILDING_POINTS {
            split.skipped.push((fp.id.clone(), idx.len()));
            continue;
        }
        let sub = cloud.select(&idx);
        let z_ground = quantile(&band_z[fi], GROUND_QUANTILE)
            .unwrap_or_else(|| quantile(&sub.points.iter().map(|p| p.z).collect::<Vec<_>>(), GROUND_QUANTILE).unwrap());
        split.instances.push(BuildingInstance { id: fp.id.clone(), cloud: sub, footprint: Some(fp.polygon.clone()), z_ground });
    }
    split
}

/// One instance per distinct label, in ascending label order.
pub fn split_by_instance_labels(cloud: &PointCloud) -> Result<Split> {
    let ids = cloud.instance_ids.as_ref().ok_or(Error::MissingLabels)?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    let mut split = Split::default();
    for (id, idx) in groups {
        if idx.len() < MIN_BUILDING_POINTS {
            split.skipped.push((id.to_string(), idx.len()));
            continue;
        }
        let sub = cloud.select(&idx);
        let z_ground = quantile(&sub.points.iter().map(|p| p.z).collect::<Vec<_>>(), GROUND_QUANTILE).unwrap();
        split.instances.push(BuildingInstance { id: id.to_string(), cloud: sub, footprint: None, z_ground });
    }
    Ok(split)
}

/// Like [`split_by_instance_labels`] but keeps every group regardless of size.
pub fn partition_by_labels(cloud: &PointCloud) -> Result<BTreeMap<i64, Vec<usize>>> {
    let ids = cloud.instance_ids.as_ref().ok_or(Error::MissingLabels)?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(x0: f64, y0: f64, n: usize, z: f64) -> Vec<Point3> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                v.push(Point3::new(x0 + 0.1 + i as f64 * 0.1, y0 + 0.1 + j as f64 * 0.1, z));
            }
        }
        v
    }

    fn fp(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Footprint {
        Footprint { id: id.into(), polygon: Polygon2::rectangle(x0, y0, x1, y1) }
    }

    #[test]
    fn two_disjoint_squares() {
        let mut pts = grid(0.0, 0.0, 6, 5.0);
        pts.extend(grid(10.0, 0.0, 7, 6.0));
        pts.push(Point3::new(50.0, 50.0, 1.0));
        let cloud = PointCloud::from_points(pts);
        let fps = FootprintSet::new(vec![fp("a", 0., 0., 1., 1.), fp("b", 10., 0., 11., 1.)]).unwrap();
        let s = split_by_footprints(&cloud, &fps);
        assert_eq!(s.instances.len(), 2);
        assert_eq!(s.instances[0].cloud.len(), 36);
        assert_eq!(s.instances[1].cloud.len(), 49);
        assert!(s.instances[0].cloud.points.iter().all(|p| p.x < 2.0));
        assert!(s.skipped.is_empty());
    }

    #[test]
    fn overlapping_footprints_first_wins() {
        let cloud = PointCloud::from_points(grid(0.0, 0.0, 8, 3.0));
        let fps = FootprintSet::new(vec![fp("first", 0., 0., 1., 1.), fp("second", 0.5, 0., 2., 1.)]).unwrap();
        let s = split_by_footprints(&cloud, &fps);
        let first = &s.instances[0];
        assert_eq!(first.id, "first");
        // Oracle: a point belongs to "second" only if it is outside "first".
        let expected_second = cloud
            .points
            .iter()
            .filter(|p| {
                fps.footprints[0].polygon.locate(p.xy()) == Location::Outside
                    && fps.footprints[1].polygon.locate(p.xy()) != Location::Outside
            })
            .count();
        let second_len = s.instances.iter().find(|i| i.id == "second").map_or(0, |i| i.cloud.len());
        assert_eq!(second_len, expected_second);
        assert_eq!(first.cloud.len() + second_len, 64);
    }

    #[test]
    fn sparse_building_is_skipped() {
        let cloud = PointCloud::from_points(grid(0.0, 0.0, 3, 3.0));
        let fps = FootprintSet::new(vec![fp("tiny", 0., 0., 1., 1.)]).unwrap();
        let s = split_by_footprints(&cloud, &fps);
        assert!(s.instances.is_empty());
        assert_eq!(s.skipped, vec![("tiny".to_string(), 9)]);
    }

    #[test]
    fn ground_from_band_outside() {
        let mut pts = grid(0.0, 0.0, 8, 6.0);
        for k in 0..40 {
            pts.push(Point3::new(-1.0 + k as f64 * 0.05, -0.5, 0.25));
        }
        let s = split_by_footprints(
            &PointCloud::from_points(pts),
            &FootprintSet::new(vec![fp("a", 0., 0., 1., 1.)]).unwrap(),
        );
        assert!((s.instances[0].z_ground - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ground_falls_back_to_own_quantile() {
        let s = split_by_footprints(
            &PointCloud::from_points(grid(0.0, 0.0, 8, 6.0)),
            &FootprintSet::new(vec![fp("a", 0., 0., 1., 1.)]).unwrap(),
        );
        assert_eq!(s.instances[0].z_ground, 6.0);
    }

    #[test]
    fn labels_split() {
        let mut cloud = PointCloud::from_points(vec![Point3::new(0., 0., 0.); 3]);
        cloud.instance_ids = Some(vec![1, 1, 2]);
        let groups = partition_by_labels(&cloud).unwrap();
        assert_eq!(groups[&1].len(), 2);
        assert_eq!(groups[&2].len(), 1);
        cloud.instance_ids = None;
        assert!(matches!(split_by_instance_labels(&cloud), Err(Error::MissingLabels)));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[4.0, 0.0, 2.0], 0.5), Some(2.0));
        assert_eq!(quantile(&[0.0, 10.0], 0.05), Some(0.5));
    }
}
