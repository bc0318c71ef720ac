use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, ValueEnum};

use city3d::pipeline::{exit_code_for, run, ConfigOverrides, InstanceSource, PipelineConfig};
use city3d::wall_infer::WallSource;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WallSourceArg {
    FootprintPreferred,
    InferredOnly,
}

/// Reconstructs compact watertight building models from an airborne point cloud.
#[derive(Debug, Parser)]
#[command(name = "city3d", version)]
struct Args {
    /// Point cloud (.xyz, .txt, .pts or .ply).
    #[arg(long)]
    input: PathBuf,
    /// Building footprints (.geojson/.json or .wkt).
    #[arg(long, required_unless_present = "labels", conflicts_with = "labels")]
    footprints: Option<PathBuf>,
    /// Split buildings by the per-point instance labels of the input instead of footprints.
    #[arg(long)]
    labels: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Heightmap resolution (m).
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    epsilon_d: Option<f64>,
    #[arg(long)]
    epsilon_c: Option<f64>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    /// Solver time limit per building (s).
    #[arg(long)]
    time_limit: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    wall_source: Option<WallSourceArg>,
    /// Write heightmaps, polylines, candidate faces and the selection program per building.
    #[arg(long, action = ArgAction::SetTrue)]
    dump_debug: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Fan-triangulate output faces.
    #[arg(long, action = ArgAction::SetTrue)]
    triangulate: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let overrides = ConfigOverrides {
        resolution: args.resolution,
        epsilon_d: args.epsilon_d,
        epsilon_c: args.epsilon_c,
        lambda_d: args.lambda_d,
        lambda_c: args.lambda_c,
        lambda_r: args.lambda_r,
        time_limit: args.time_limit,
        threads: args.threads,
        wall_source: args.wall_source.map(|w| match w {
            WallSourceArg::FootprintPreferred => WallSource::FootprintPreferred,
            WallSourceArg::InferredOnly => WallSource::InferredOnly,
        }),
        out: args.out,
        dump_debug: args.dump_debug.then_some(true),
        triangulate: args.triangulate.then_some(true),
        seed: args.seed,
    };
    let cfg = match PipelineConfig::load(args.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(exit_code_for(&e) as u8);
        }
    };
    let source = match args.footprints {
        Some(p) => InstanceSource::Footprints(p),
        None => InstanceSource::Labels,
    };
    match run(&cfg, &args.input, &source) {
        Ok(outcome) => {
            let s = &outcome.summary;
            if s.buildings == 0 {
                log::warn!("no buildings to reconstruct");
            }
            log::info!("{} of {} buildings reconstructed ({} failed), mean faces {:.1}, rmse {:.3}..{:.3} m", s.succeeded, s.buildings, s.failed, s.mean_faces, s.rmse_min, s.rmse_max);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
