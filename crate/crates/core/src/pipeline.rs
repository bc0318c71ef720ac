//! Batch orchestration: configuration, per-building reconstruction and output writing.

use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::{rmse, summarize, validate_mesh, BuildingReport, BuildingStatus, StageTimings, Summary};
use crate::hypothesize::{hypothesize, write_candidates_obj, CandidateSet, HypothesisParams};
use crate::ingest::{load_footprints, load_point_cloud, split_by_footprints, split_by_instance_labels, BuildingInstance, FootprintFormat, PointFormat, Split};
use crate::plane_detect::{detect_planes, PlanarSegment, RegionGrowParams, SegmentKind};
use crate::select::{build_problem, extract_mesh, solve, SelectOptions, SelectionProblem, Weights};
use crate::wall_infer::{infer_walls, write_pgm, OtParams, WallInference, WallParams, WallSource};
use crate::{Error, Result, SurfaceMesh};

/// All tunables of a run. Every field may be set from a TOML file; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Heightmap resolution r (m).
    pub resolution: f64,
    pub epsilon_d: f64,
    pub epsilon_c: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
    /// Neighbourhood size for normals and region growing.
    pub k_neighbors: usize,
    pub angle_tolerance: f64,
    /// Point-to-plane tolerance; derived from point spacing when absent.
    pub distance_tolerance: Option<f64>,
    pub min_segment_points: usize,
    /// Roof segments below this fraction of a building's points are ignored.
    pub min_roof_fraction: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    /// Solver time limit per building (s).
    pub time_limit: f64,
    pub wall_source: WallSource,
    pub use_priors: bool,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub out: PathBuf,
    pub dump_debug: bool,
    pub triangulate: bool,
    /// Recorded for reproducibility; every stage is deterministic.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = Weights::default();
        let rg = RegionGrowParams::default();
        let wp = WallParams::default();
        Self {
            resolution: wp.resolution,
            epsilon_d: wp.ot.epsilon_d,
            epsilon_c: wp.ot.epsilon_c,
            lambda_d: w.lambda_d,
            lambda_c: w.lambda_c,
            lambda_r: w.lambda_r,
            k_neighbors: rg.k,
            angle_tolerance: rg.angle_tol_deg,
            distance_tolerance: rg.dist_tol,
            min_segment_points: rg.min_support,
            min_roof_fraction: 0.02,
            canny_low: wp.canny_low,
            canny_high: wp.canny_high,
            time_limit: 120.0,
            wall_source: wp.source,
            use_priors: true,
            threads: 0,
            out: PathBuf::from("out"),
            dump_debug: false,
            triangulate: false,
            seed: 0,
        }
    }
}

/// Values given on the command line; each one replaces the file or default value.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub resolution: Option<f64>,
    pub epsilon_d: Option<f64>,
    pub epsilon_c: Option<f64>,
    pub lambda_d: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_r: Option<f64>,
    pub time_limit: Option<f64>,
    pub threads: Option<usize>,
    pub wall_source: Option<WallSource>,
    pub out: Option<PathBuf>,
    pub dump_debug: Option<bool>,
    pub triangulate: Option<bool>,
    pub seed: Option<u64>,
}

impl PipelineConfig {
    /// Defaults, then the optional TOML file, then `overrides`; the result is validated.
    pub fn load(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self> {
        let mut c = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = overrides.$f.clone() { c.$f = v; } )* };
        }
        apply!(resolution, epsilon_d, epsilon_c, lambda_d, lambda_c, lambda_r, time_limit, threads, wall_source, out, dump_debug, triangulate, seed);
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        let positive = [
            ("resolution", self.resolution),
            ("epsilon_d", self.epsilon_d),
            ("epsilon_c", self.epsilon_c),
            ("angle_tolerance", self.angle_tolerance),
            ("time_limit", self.time_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(d) = self.distance_tolerance {
            if !(d > 0.0) {
                return Err(Error::InvalidConfig(format!("distance_tolerance must be positive, got {d}")));
            }
        }
        if !(0.0..1.0).contains(&self.min_roof_fraction) {
            return Err(Error::InvalidConfig(format!("min_roof_fraction must lie in [0, 1), got {}", self.min_roof_fraction)));
        }
        if !(self.canny_low > 0.0 && self.canny_low <= self.canny_high) {
            return Err(Error::InvalidConfig(format!("canny thresholds must satisfy 0 < canny_low <= canny_high, got {} and {}", self.canny_low, self.canny_high)));
        }
        if self.k_neighbors < 3 {
            return Err(Error::InvalidConfig(format!("k_neighbors must be at least 3, got {}", self.k_neighbors)));
        }
        Ok(())
    }

    pub fn weights(&self) -> Weights {
        Weights { lambda_d: self.lambda_d, lambda_c: self.lambda_c, lambda_r: self.lambda_r }
    }

    pub fn region_grow(&self) -> RegionGrowParams {
        RegionGrowParams {
            k: self.k_neighbors,
            angle_tol_deg: self.angle_tolerance,
            dist_tol: self.distance_tolerance,
            min_support: self.min_segment_points,
            ..Default::default()
        }
    }

    pub fn wall_params(&self) -> WallParams {
        WallParams {
            resolution: self.resolution,
            canny_low: self.canny_low,
            canny_high: self.canny_high,
            ot: OtParams { epsilon_d: self.epsilon_d, epsilon_c: self.epsilon_c, ..Default::default() },
            source: self.wall_source,
            ..Default::default()
        }
    }
}

/// Intermediate products kept for debug dumps.
pub struct DebugArtifacts {
    pub walls: WallInference,
    pub candidates: CandidateSet,
    pub problem: Option<SelectionProblem>,
}

pub struct BuildingResult {
    pub report: BuildingReport,
    pub mesh: Option<SurfaceMesh>,
    pub debug: Option<DebugArtifacts>,
}

/// Roof segments large enough to enter the hypothesis.
pub fn roof_segments(segments: &[PlanarSegment], points: usize, min_fraction: f64) -> Vec<PlanarSegment> {
    segments.iter().filter(|s| s.kind == SegmentKind::Roof && s.support as f64 >= min_fraction * points as f64).cloned().collect()
}

/// Builds the selection problem, dropping the weakest of any priors that share a vertical
/// group until the constraints admit a solution. Returns the dropped prior faces.
pub fn build_problem_dropping_priors(cs: &mut CandidateSet, total_points: usize, opts: &SelectOptions) -> Result<(SelectionProblem, Vec<usize>)> {
    let mut dropped = Vec::new();
    loop {
        match build_problem(cs, total_points, opts) {
            Ok(p) => return Ok((p, dropped)),
            Err(Error::InfeasibleByConstruction { prior, group }) => {
                log::warn!("prior face {prior} conflicts within vertical group {group:?}; dropped");
                cs.priors.retain(|_, f| *f != prior);
                dropped.push(prior);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs every stage on one building. Failures become a failed report.
pub fn reconstruct_building(inst: &BuildingInstance, cfg: &PipelineConfig) -> BuildingResult {
    let mut timings = StageTimings::default();
    let start = Instant::now();
    let mut debug = None;
    match reconstruct_inner(inst, cfg, &mut timings, &mut debug) {
        Ok((mesh, mut report)) => {
            timings.total = start.elapsed().as_secs_f64();
            report.timings = timings;
            BuildingResult { report, mesh: Some(mesh), debug }
        }
        Err(e) => {
            let mut report = BuildingReport::failed(&inst.id, inst.cloud.len(), e.to_string());
            timings.total = start.elapsed().as_secs_f64();
            report.timings = timings;
            if let Some(d) = &debug {
                report.wall_source = Some(d.walls.source);
                report.candidates = Some(d.candidates.faces.len());
            }
            BuildingResult { report, mesh: None, debug }
        }
    }
}

fn reconstruct_inner(inst: &BuildingInstance, cfg: &PipelineConfig, t: &mut StageTimings, debug: &mut Option<DebugArtifacts>) -> Result<(SurfaceMesh, BuildingReport)> {
    let clock = Instant::now();
    let det = detect_planes(&inst.cloud, &cfg.region_grow())?;
    let roofs = roof_segments(&det.segments, inst.cloud.len(), cfg.min_roof_fraction);
    if roofs.is_empty() {
        return Err(Error::NoRoofPlanes);
    }
    t.planes = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let walls = infer_walls(inst, &cfg.wall_params())?;
    t.walls = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut cs = hypothesize(&roofs, &walls.walls, &walls.boundary, &det.cloud, inst.z_ground, inst.z_max(), det.dist_tol, cfg.angle_tolerance, &HypothesisParams::default())?;
    t.hypothesis = clock.elapsed().as_secs_f64();
    let source = walls.source;

    let clock = Instant::now();
    let opts = SelectOptions { weights: cfg.weights(), use_priors: cfg.use_priors };
    let built = build_problem_dropping_priors(&mut cs, inst.cloud.len(), &opts);
    let (problem, dropped) = match built {
        Ok(b) => b,
        Err(e) => {
            *debug = cfg.dump_debug.then(|| DebugArtifacts { walls, candidates: cs, problem: None });
            return Err(e);
        }
    };
    let solved = solve(&problem, Duration::from_secs_f64(cfg.time_limit));
    t.selection = clock.elapsed().as_secs_f64();
    let candidates = cs.faces.len();
    let free = problem.free_count();
    let keep = |walls, cs, problem| cfg.dump_debug.then(|| DebugArtifacts { walls, candidates: cs, problem: Some(problem) });
    let sol = match solved {
        Ok(s) => s,
        Err(e) => {
            *debug = keep(walls, cs, problem);
            return Err(e);
        }
    };

    let clock = Instant::now();
    let mesh = extract_mesh(&cs, &sol);
    t.extraction = clock.elapsed().as_secs_f64();
    *debug = keep(walls, cs, problem);
    let mesh = mesh?;

    let clock = Instant::now();
    let defects = validate_mesh(&mesh);
    if !defects.is_empty() {
        return Err(Error::NonManifoldResult(format!("{} defects, first {:?}", defects.len(), defects[0])));
    }
    let err = rmse(&inst.cloud.points, &mesh);
    t.evaluation = clock.elapsed().as_secs_f64();

    let report = BuildingReport {
        id: inst.id.clone(),
        points: inst.cloud.len(),
        faces: mesh.faces.len(),
        rmse: Some(err),
        status: sol.status.into(),
        wall_source: Some(source),
        timings: *t,
        candidates: Some(candidates),
        free_variables: Some(free),
        solver_nodes: Some(sol.nodes),
        objective: Some(sol.objective),
        dropped_priors: dropped,
        error: None,
    };
    Ok((mesh, report))
}

/// Where the building instances come from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    Footprints(PathBuf),
    Labels,
}

/// Outcome of a batch run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<BuildingReport>,
    pub summary: Summary,
    /// Footprint or label ids skipped for having too few points.
    pub skipped: Vec<(String, usize)>,
}

impl RunOutcome {
    /// 0 when at least one building succeeded or there was nothing to reconstruct, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.reports.is_empty() || self.summary.succeeded > 0 {
            0
        } else {
            1
        }
    }
}

/// File name stem for a building id.
pub fn file_stem(id: &str) -> String {
    let s: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with('.') {
        format!("b{s}")
    } else {
        s
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a PipelineConfig,
    summary: &'a Summary,
    skipped: Vec<serde_json::Value>,
}

/// Loads the inputs, splits them into buildings and reconstructs all of them.
pub fn run(cfg: &PipelineConfig, input: &Path, instances: &InstanceSource) -> Result<RunOutcome> {
    let cloud = load_point_cloud(input, PointFormat::detect(input)?)?;
    let split = match instances {
        InstanceSource::Footprints(path) => {
            let fps = load_footprints(path, FootprintFormat::detect(path)?)?;
            if fps.is_empty() {
                if cloud.instance_ids.is_none() {
                    return Err(Error::parse(path.display().to_string(), "footprint file contains no footprints"));
                }
                log::warn!("footprint file {} is empty; no buildings reconstructed", path.display());
                Split::default()
            } else {
                split_by_footprints(&cloud, &fps)
            }
        }
        InstanceSource::Labels => split_by_instance_labels(&cloud)?,
    };
    for (id, n) in &split.skipped {
        log::warn!("building {id} skipped: {n} points");
    }
    run_instances(cfg, &split.instances, split.skipped)
}

/// Reconstructs the given buildings in parallel and writes all artifacts under `cfg.out`.
pub fn run_instances(cfg: &PipelineConfig, instances: &[BuildingInstance], skipped: Vec<(String, usize)>) -> Result<RunOutcome> {
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("threads: {e}")))?;
    let results: Vec<BuildingResult> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                let r = catch_unwind(AssertUnwindSafe(|| reconstruct_building(inst, cfg)));
                r.unwrap_or_else(|p| {
                    let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into());
                    BuildingResult { report: BuildingReport::failed(&inst.id, inst.cloud.len(), format!("internal error: {msg}")), mesh: None, debug: None }
                })
            })
            .collect()
    });

    // Single collector: all files are written here, in input order.
    let mut reports = Vec::with_capacity(results.len());
    let mut ndjson = String::new();
    for r in results {
        let stem = file_stem(&r.report.id);
        match &r.report.status {
            BuildingStatus::Failed => log::warn!("building {} failed: {}", r.report.id, r.report.error.as_deref().unwrap_or("")),
            s => log::info!("building {}: {} faces, rmse {:.3} m ({s:?})", r.report.id, r.report.faces, r.report.rmse.unwrap_or(0.0)),
        }
        if let Some(mesh) = &r.mesh {
            let path = out.join(format!("{stem}.obj"));
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            mesh.write_obj(BufWriter::new(f), cfg.triangulate).map_err(|e| Error::io(&path, e))?;
        }
        if let Some(d) = &r.debug {
            write_debug(&out.join("debug").join(&stem), d)?;
        }
        ndjson.push_str(&r.report.to_ndjson_line());
        ndjson.push('\n');
        reports.push(r.report);
    }
    let path = out.join("reports.ndjson");
    fs::write(&path, ndjson).map_err(|e| Error::io(&path, e))?;
    let summary = summarize(&reports);
    let file = SummaryFile {
        config: cfg,
        summary: &summary,
        skipped: skipped.iter().map(|(id, n)| serde_json::json!({"id": id, "points": n})).collect(),
    };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&file).expect("summary serializes")).map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome { reports, summary, skipped })
}

fn write_debug(dir: &Path, d: &DebugArtifacts) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(&p, e)
    };
    let p = dir.join("heightmap.pgm");
    let meta = write_pgm(&d.walls.heightmap, BufWriter::new(fs::File::create(&p).map_err(io(&p))?)).map_err(io(&p))?;
    let p = dir.join("heightmap.json");
    fs::write(&p, serde_json::to_string_pretty(&meta).expect("meta serializes")).map_err(io(&p))?;
    let p = dir.join("polylines.wkt");
    fs::write(&p, d.walls.regularized.to_wkt()).map_err(io(&p))?;
    if let Some(x) = &d.walls.extraction {
        let p = dir.join("polylines_raw.wkt");
        fs::write(&p, x.polylines.to_wkt()).map_err(io(&p))?;
    }
    let p = dir.join("candidates.obj");
    write_candidates_obj(&d.candidates, BufWriter::new(fs::File::create(&p).map_err(io(&p))?)).map_err(io(&p))?;
    if let Some(problem) = &d.problem {
        let p = dir.join("problem.lp");
        problem.write_lp(BufWriter::new(fs::File::create(&p).map_err(io(&p))?)).map_err(io(&p))?;
    }
    Ok(())
}

/// Process exit status for an error that aborts a run.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_parameters() {
        let c = PipelineConfig::load(None, &ConfigOverrides::default()).unwrap();
        assert_eq!((c.epsilon_d, c.epsilon_c), (0.25, 2.0));
        assert_eq!((c.lambda_d, c.lambda_c, c.lambda_r), (0.34, 0.62, 0.04));
        assert_eq!(c.resolution, 0.2);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "resolution = 0.15\ntime_limit = 30.0\n").unwrap();
        let c = PipelineConfig::load(Some(&p), &ConfigOverrides { resolution: Some(0.25), ..Default::default() }).unwrap();
        assert_eq!(c.resolution, 0.25);
        assert_eq!(c.time_limit, 30.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = PipelineConfig::from_toml("resolutoin = 0.2\n").unwrap_err();
        assert!(matches!(&e, Error::InvalidConfig(m) if m.contains("resolutoin")), "{e}");
        assert_eq!(exit_code_for(&e), 3);
    }

    #[test]
    fn bad_weights_name_the_fields() {
        let e = PipelineConfig::load(None, &ConfigOverrides { lambda_d: Some(0.5), ..Default::default() }).unwrap_err();
        let m = e.to_string();
        assert!(m.contains("lambda_d") && m.contains("lambda_c") && m.contains("lambda_r"), "{m}");
        assert_eq!(exit_code_for(&e), 3);
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("a/b c"), "a_b_c");
        assert_eq!(file_stem("12"), "12");
        assert_eq!(file_stem(".."), "b..");
    }
}
