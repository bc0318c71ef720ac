//! Vertical wall inference from roof evidence: TIN → heightmap → closing → Canny contours →
//! transport-driven polyline extraction → regularization → extrusion.

pub mod canny;
pub mod extrude;
pub mod ot;
pub mod polyline;
pub mod raster;
pub mod regularize;

pub use raster::{build_tin, morph_close, rasterize_tin, rasterize_tin_filtered, rasterize_tin_over, write_pgm, Heightmap, HeightmapMeta, Tin};
pub use canny::{detect_contours, ContourPixels};
pub use ot::{extract_polylines, transport_cost, Extraction, OtParams, OtReport};
pub use polyline::{Polyline, PolylineSet, SegmentTag};
pub use regularize::{regularize, regularize_with, RegularizeParams};
pub use extrude::{extrude, outer_loop, VerticalPlane, VerticalPlaneSet, WallTag};

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::BuildingInstance;
use crate::{Error, Point2, Point3, Polygon2, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallSource {
    /// Outer walls from the footprint when one is available, otherwise inferred.
    FootprintPreferred,
    InferredOnly,
}

/// Where the outer walls of a building came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterSource {
    Footprint,
    Inferred,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallParams {
    /// Heightmap resolution r (m/pixel).
    pub resolution: f64,
    /// Closing kernel (pixels, odd).
    pub close_kernel: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    pub ot: OtParams,
    pub regularize: RegularizeParams,
    /// TIN triangles with a longer edge are not rasterized (m).
    pub max_tin_edge: f64,
    pub source: WallSource,
}

impl Default for WallParams {
    fn default() -> Self {
        Self {
            resolution: 0.2,
            close_kernel: 3,
            canny_low: 0.3,
            canny_high: 0.8,
            ot: OtParams::default(),
            regularize: RegularizeParams::default(),
            max_tin_edge: 3.0,
            source: WallSource::FootprintPreferred,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WallInference {
    /// Outer boundary loop (holes dropped).
    pub boundary: Polygon2,
    pub walls: VerticalPlaneSet,
    pub source: OuterSource,
    pub heightmap: Heightmap,
    pub contours: ContourPixels,
    /// Raw extraction with instrumentation; `None` when too few contour pixels were found.
    pub extraction: Option<Extraction>,
    pub regularized: PolylineSet,
}

impl WallInference {
    /// Inner wall traces.
    pub fn inner_traces(&self) -> Vec<(Point2, Point2)> {
        self.walls.inner().map(|w| w.trace).collect()
    }

    /// Writes `<id>_heightmap.pgm`, its JSON sidecar, and WKT files of the raw and
    /// regularized polylines.
    pub fn dump_debug(&self, dir: &Path, id: &str) -> Result<()> {
        let pgm = dir.join(format!("{id}_heightmap.pgm"));
        let file = File::create(&pgm).map_err(|e| Error::io(&pgm, e))?;
        let meta = write_pgm(&self.heightmap, BufWriter::new(file)).map_err(|e| Error::io(&pgm, e))?;
        let side = dir.join(format!("{id}_heightmap.json"));
        let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
        if let Some(ex) = &self.extraction {
            let raw = dir.join(format!("{id}_polylines_raw.wkt"));
            std::fs::write(&raw, ex.polylines.to_wkt()).map_err(|e| Error::io(&raw, e))?;
        }
        let reg = dir.join(format!("{id}_polylines.wkt"));
        std::fs::write(&reg, self.regularized.to_wkt()).map_err(|e| Error::io(&reg, e))?;
        Ok(())
    }
}

/// Invalidates pixels outside the footprint and extends the surface to footprint pixels the
/// TIN does not reach (nearest valid pixel, breadth-first), so the contour follows the
/// footprint rather than the hull of the samples.
fn clip_to_footprint(hm: &mut Heightmap, fp: &Polygon2) {
    let mut inside = vec![false; hm.values.len()];
    let mut queue = std::collections::VecDeque::new();
    for j in 0..hm.height {
        for i in 0..hm.width {
            let k = hm.idx(i, j);
            inside[k] = fp.contains(hm.center(i, j));
            if !inside[k] {
                hm.valid[k] = false;
                hm.values[k] = hm.fill;
            } else if hm.valid[k] {
                queue.push_back((i, j));
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let z = hm.values[hm.idx(i, j)];
        let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
        for (a, b) in nbrs {
            if a >= hm.width || b >= hm.height {
                continue;
            }
            let k = hm.idx(a, b);
            if inside[k] && !hm.valid[k] {
                hm.set(a, b, z);
                queue.push_back((a, b));
            }
        }
    }
}

/// Share of a building's points an inferred outer loop must enclose (within one pixel).
pub const MIN_BOUNDARY_COVERAGE: f64 = 0.95;
const BRIDGE_ATTEMPTS: usize = 3;

fn coverage(boundary: &Polygon2, points: &[Point3], r: f64) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let inside = points.iter().filter(|p| boundary.contains(p.xy()) || boundary.boundary_distance(p.xy()) <= r).count();
    inside as f64 / points.len() as f64
}

/// Runs the wall-inference chain for one building.
pub fn infer_walls(instance: &BuildingInstance, params: &WallParams) -> Result<WallInference> {
    let r = params.resolution;
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(format!("resolution must be positive, got {r}")));
    }
    let tin = build_tin(instance)?;
    let footprint = match params.source {
        WallSource::FootprintPreferred => instance.footprint.as_ref(),
        WallSource::InferredOnly => None,
    };
    let (mut lo, mut hi) = tin.bounds();
    if let Some(fp) = footprint {
        let (flo, fhi) = fp.bounds();
        lo = Point2::new(lo.x.min(flo.x), lo.y.min(flo.y));
        hi = Point2::new(hi.x.max(fhi.x), hi.y.max(fhi.y));
    }
    let mut hm = rasterize_tin_filtered(&tin, r, lo, hi, params.max_tin_edge);
    hm.fill = instance.z_ground;
    if let Some(fp) = footprint {
        clip_to_footprint(&mut hm, fp);
    }
    let hm = morph_close(&hm, params.close_kernel);
    let contours = detect_contours(&hm, params.canny_low, params.canny_high);
    let extraction = match extract_polylines(&contours, &params.ot) {
        Ok(ex) => Some(ex),
        Err(Error::TooFewPixels(_)) if footprint.is_some() => None,
        Err(e) => return Err(e),
    };
    let raw = extraction.as_ref().map(|e| e.polylines.clone()).unwrap_or_default();
    let mut regularized = regularize_with(&raw, footprint, &params.regularize);

    let (boundary, source) = match footprint {
        Some(fp) => (Polygon2::new(fp.outer().to_vec(), vec![])?, OuterSource::Footprint),
        None => {
            // Corner gaps left by the contour tracer can exceed the bridging distance, leaving
            // the outline open so that only part of the building closes. Retry with wider
            // bridging until the loop covers the building's points.
            let mut best: Option<(f64, Polygon2, PolylineSet)> = None;
            for k in 1..=BRIDGE_ATTEMPTS {
                let reg = if k == 1 {
                    regularized.clone()
                } else {
                    let wider = RegularizeParams { bridge_dist: k as f64 * params.regularize.bridge_dist, ..params.regularize };
                    regularize_with(&raw, None, &wider)
                };
                let Some(b) = outer_loop(&reg) else { continue };
                let cov = coverage(&b, &instance.cloud.points, r);
                if best.as_ref().map_or(true, |x| cov > x.0) {
                    best = Some((cov, b, reg));
                }
                if cov >= MIN_BOUNDARY_COVERAGE {
                    break;
                }
            }
            let (_, boundary, reg) = best.ok_or(Error::OpenBoundary)?;
            regularized = reg;
            (boundary, OuterSource::Inferred)
        }
    };
    let walls = extrude(&regularized, &boundary, footprint.is_some(), r, instance.z_ground, instance.z_max());
    Ok(WallInference { boundary, walls, source, heightmap: hm, contours, extraction, regularized })
}
