//! Batch runs through the library and the command-line tool.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use city3d::evaluate::{validate_mesh, BuildingReport, BuildingStatus};
use city3d::ingest::{load_footprints, load_point_cloud, save_ply, split_by_footprints, BuildingInstance, FootprintFormat, PointCloud, PointFormat};
use city3d::pipeline::{reconstruct_building, run, run_instances, ConfigOverrides, InstanceSource, PipelineConfig};
use city3d::synthkit::{generate, write_scene, Archetype, SynthSpec, Synthetic};
use city3d::Point3;

fn city3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_city3d")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn scene(dir: &Path) -> (String, String) {
    let buildings: Vec<(String, Synthetic)> = [Archetype::FlatBox, Archetype::Gable]
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut spec = SynthSpec::new(a).with_seed(3);
            spec.origin = (i as f64 * 40.0, 0.0);
            (a.name().to_string(), generate(&spec))
        })
        .collect();
    let (c, f) = write_scene(&buildings, dir).unwrap();
    (c.display().to_string(), f.display().to_string())
}

fn reports(out: &Path) -> Vec<BuildingReport> {
    fs::read_to_string(out.join("reports.ndjson")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn cli_writes_models_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, fps) = scene(dir.path());
    let out = dir.path().join("out");
    let o = city3d(&["--input", &cloud, "--footprints", &fps, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("flat-box.obj").is_file() && out.join("gable.obj").is_file());
    let r = reports(&out);
    assert_eq!(r.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["flat-box", "gable"]);
    assert!(r.iter().all(|r| r.status == BuildingStatus::Optimal));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["buildings"], 2);
    assert_eq!(summary["summary"]["succeeded"], 2);
    assert_eq!(summary["config"]["threads"], 2);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, fps) = scene(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    // Weights that do not sum to one are a configuration error.
    let o = city3d(&["--input", &cloud, "--footprints", &fps, "--out", out, "--lambda-d", "0.5"]);
    assert_eq!(o.status.code(), Some(3));

    let o = city3d(&["--input", "/nonexistent/cloud.xyz", "--footprints", &fps, "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "resolution = 0.2\nlambda_x = 1.0\n").unwrap();
    let o = city3d(&["--input", &cloud, "--footprints", &fps, "--out", out, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_x"));

    // Neither footprints nor labels.
    let o = city3d(&["--input", &cloud, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_file_values_which_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, "resolution = 0.25\ntime_limit = 30.0\nlambda_d = 0.3\nlambda_c = 0.6\nlambda_r = 0.1\n").unwrap();
    let flags = ConfigOverrides { time_limit: Some(5.0), ..Default::default() };
    let c = PipelineConfig::load(Some(&path), &flags).unwrap();
    assert_eq!(c.resolution, 0.25);
    assert_eq!(c.time_limit, 5.0);
    assert_eq!((c.lambda_d, c.lambda_c, c.lambda_r), (0.3, 0.6, 0.1));
    assert_eq!(c.epsilon_d, PipelineConfig::default().epsilon_d);
}

#[test]
fn empty_footprints_with_labelled_cloud_reconstructs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cloud = generate(&SynthSpec::new(Archetype::FlatBox)).scene_cloud();
    cloud.instance_ids = Some(vec![1; cloud.len()]);
    let cp = dir.path().join("c.ply");
    save_ply(&cloud, &cp, true).unwrap();
    let fp = dir.path().join("f.geojson");
    fs::write(&fp, r#"{"type": "FeatureCollection", "features": []}"#).unwrap();
    let cfg = PipelineConfig { out: dir.path().join("out"), ..Default::default() };
    let outcome = run(&cfg, &cp, &InstanceSource::Footprints(fp.clone())).unwrap();
    assert!(outcome.reports.is_empty());
    assert_eq!(outcome.exit_code(), 0);

    // Without instance ids there is nothing to fall back on.
    cloud.instance_ids = None;
    save_ply(&cloud, &cp, true).unwrap();
    assert!(run(&cfg, &cp, &InstanceSource::Footprints(fp)).is_err());
}

#[test]
fn labels_split_reconstructs_each_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cloud = PointCloud::default();
    let mut ids = Vec::new();
    for (i, a) in [Archetype::FlatBox, Archetype::TwoTier].into_iter().enumerate() {
        let mut spec = SynthSpec::new(a).with_seed(5);
        spec.origin = (i as f64 * 50.0, 10.0);
        let c = generate(&spec).scene_cloud();
        ids.extend(std::iter::repeat(10 + i as i64).take(c.len()));
        cloud.extend(&c);
    }
    cloud.instance_ids = Some(ids);
    let cp = dir.path().join("c.ply");
    save_ply(&cloud, &cp, true).unwrap();
    let out = dir.path().join("out");
    let o = city3d(&["--input", cp.to_str().unwrap(), "--labels", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = reports(&out);
    assert_eq!(r.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["10", "11"]);
    assert!(r.iter().all(|r| r.succeeded()), "{r:?}");
}

#[test]
fn dump_debug_writes_per_building_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, fps) = scene(dir.path());
    let out = dir.path().join("out");
    let o = city3d(&["--input", &cloud, "--footprints", &fps, "--out", out.to_str().unwrap(), "--dump-debug"]);
    assert_eq!(o.status.code(), Some(0));
    for b in ["flat-box", "gable"] {
        let d = out.join("debug").join(b);
        for f in ["heightmap.pgm", "heightmap.json", "polylines.wkt", "candidates.obj", "problem.lp"] {
            assert!(d.join(f).is_file(), "{b}/{f} missing");
        }
        assert!(fs::read(d.join("heightmap.pgm")).unwrap().starts_with(b"P5"));
        let lp = fs::read_to_string(d.join("problem.lp")).unwrap();
        for section in ["Minimize", "Subject To", "Binaries", "End"] {
            assert!(lp.lines().any(|l| l == section), "{b}: no {section} section");
        }
    }
}

#[test]
fn flat_box_reconstructs_as_six_faces() {
    let sigma = 0.05;
    let syn = generate(&SynthSpec::new(Archetype::FlatBox).with_seed(11).with_noise(sigma));
    let inst = split_by_footprints(&syn.scene_cloud(), &syn.footprint_set("b")).instances.remove(0);
    let r = reconstruct_building(&inst, &PipelineConfig::default());
    let mesh = r.mesh.expect("model");
    assert_eq!(mesh.faces.len(), 6);
    assert!(validate_mesh(&mesh).is_empty());
    let rmse = r.report.rmse.unwrap();
    assert!(rmse <= 2.0 * sigma, "rmse {rmse}");
    // Volume of the 10 × 8 × 5 box.
    assert!((mesh.signed_volume() - 400.0).abs() < 400.0 * 0.02, "volume {}", mesh.signed_volume());
}

#[test]
fn every_archetype_yields_a_valid_model() {
    for a in Archetype::ALL {
        for seed in [21, 22] {
            let syn = generate(&SynthSpec::new(a).with_seed(seed));
            let inst = split_by_footprints(&syn.scene_cloud(), &syn.footprint_set("b")).instances.remove(0);
            let r = reconstruct_building(&inst, &PipelineConfig::default());
            let mesh = r.mesh.unwrap_or_else(|| panic!("{a:?}/{seed}: {:?}", r.report.error));
            assert_eq!(validate_mesh(&mesh), vec![], "{a:?}/{seed}");
            assert!(mesh.signed_volume() > 0.0);
        }
    }
}

#[test]
fn one_bad_building_does_not_sink_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let syn = generate(&SynthSpec::new(Archetype::Gable).with_seed(2));
    let good = split_by_footprints(&syn.scene_cloud(), &syn.footprint_set("good")).instances.remove(0);
    // Collinear points: no plane, no wall, no model.
    let line: Vec<Point3> = (0..200).map(|i| Point3::new(100.0 + i as f64 * 0.05, 0.0, 3.0)).collect();
    let bad = BuildingInstance { id: "bad".into(), cloud: PointCloud::from_points(line), footprint: None, z_ground: 0.0 };
    let cfg = PipelineConfig { out: dir.path().to_path_buf(), threads: 2, ..Default::default() };
    let outcome = run_instances(&cfg, &[bad, good], vec![]).unwrap();
    assert_eq!(outcome.reports[0].status, BuildingStatus::Failed);
    assert!(outcome.reports[0].error.is_some());
    assert!(outcome.reports[1].succeeded());
    assert_eq!((outcome.summary.succeeded, outcome.summary.failed), (1, 1));
    assert_eq!(outcome.exit_code(), 0);
    assert!(dir.path().join("good.obj").is_file() && !dir.path().join("bad.obj").exists());

    let only_bad = run_instances(&cfg, &collinear_building(), vec![]).unwrap();
    assert_eq!(only_bad.exit_code(), 1);
}

fn collinear_building() -> Vec<BuildingInstance> {
    let pts: Vec<Point3> = (0..100).map(|i| Point3::new(i as f64 * 0.1, 0.0, 1.0)).collect();
    vec![BuildingInstance { id: "line".into(), cloud: PointCloud::from_points(pts), footprint: None, z_ground: 0.0 }]
}

#[test]
fn written_scene_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let syn = generate(&SynthSpec::new(Archetype::Hip).with_seed(4));
    let (cp, fp) = write_scene(&[("h".to_string(), syn.clone())], dir.path()).unwrap();
    let cloud = load_point_cloud(&cp, PointFormat::detect(&cp).unwrap()).unwrap();
    let scene = syn.scene_cloud();
    assert_eq!(cloud.len(), scene.len());
    assert!(cloud.points.iter().zip(&scene.points).all(|(a, b)| (*a - *b).norm() < 1e-6));
    let fps = load_footprints(&fp, FootprintFormat::detect(&fp).unwrap()).unwrap();
    assert_eq!(fps.footprints[0].id, "h");
    assert!((fps.footprints[0].polygon.area() - syn.footprint.area()).abs() < 1e-9);
}
