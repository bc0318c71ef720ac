use std::fmt::Write as _;

use crate::{Point2, Vector2};

/// Regularization record for one segment: its cluster and exact direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTag {
    pub cluster: usize,
    pub direction: Vector2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point2>,
    pub closed: bool,
    /// One entry per segment; `Some` once regularized.
    pub tags: Vec<Option<SegmentTag>>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>, closed: bool) -> Self {
        let n = if closed { points.len() } else { points.len().saturating_sub(1) };
        Self { points, closed, tags: vec![None; n] }
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len().saturating_sub(1)
        }
    }

    pub fn segment(&self, k: usize) -> (Point2, Point2) {
        (self.points[k], self.points[(k + 1) % self.points.len()])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        (0..self.segment_count()).map(move |k| self.segment(k))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance(&self, p: Point2) -> f64 {
        if self.points.len() == 1 {
            return p.distance(self.points[0]);
        }
        self.segments().map(|(a, b)| crate::geom::point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolylineSet {
    pub polylines: Vec<Polyline>,
}

impl PolylineSet {
    pub fn segment_count(&self) -> usize {
        self.polylines.iter().map(|p| p.segment_count()).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.polylines.iter().flat_map(|p| p.segments())
    }

    pub fn distance(&self, p: Point2) -> f64 {
        self.polylines.iter().map(|l| l.distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Directed Hausdorff distance from `points` to the polylines.
    pub fn hausdorff_from(&self, points: &[Point2]) -> f64 {
        points.iter().map(|&p| self.distance(p)).fold(0.0, f64::max)
    }

    /// One `LINESTRING` per line; closed polylines repeat their first vertex.
    pub fn to_wkt(&self) -> String {
        let mut s = String::new();
        for pl in &self.polylines {
            let mut pts = pl.points.clone();
            if pl.closed && !pts.is_empty() {
                pts.push(pts[0]);
            }
            let coords: Vec<String> = pts.iter().map(|p| format!("{:.6} {:.6}", p.x, p.y)).collect();
            let _ = writeln!(s, "LINESTRING ({})", coords.join(", "));
        }
        s
    }
}
