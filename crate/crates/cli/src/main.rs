use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use livo::eval::{compute_ate, end_to_end_error};
use livo::io::{read_tum, write_dataset, write_ply};
use livo::pipeline::{map_vertices, read_map_csv, write_run, PipelineConfig, Source};
use livo::sim::{SimConfig, Simulation};

#[derive(Parser, Debug)]
#[command(name = "livo", version, about = "LiDAR-inertial-visual odometry with online camera calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a dataset directory from a simulator config.
    Simulate {
        scene_config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Trajectory metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write the colored map of a run directory as binary PLY.
    ExportPly {
        run_dir: PathBuf,
        /// Defaults to `<run_dir>/map.ply`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Leave out points that never received a color.
        #[arg(long)]
        rendered_only: bool,
    },
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// RMSE of the absolute translational error after rigid alignment.
    Ate { trajectory: PathBuf, groundtruth: PathBuf },
    /// Distance between the first and last positions.
    E2e { trajectory: PathBuf },
}

fn run(config: &Path, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = PipelineConfig::read(config)?;
    let Some(input) = cfg.input.clone() else { bail!("config sets neither `dataset` nor `simulation`") };
    let out_dir = output
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")).join("run"));
    cfg.output = Some(out_dir.clone());
    let source = Source::open(&input)?;
    let out = source.run(cfg)?;
    write_run(&out_dir, &out)?;

    let (lidar, vision, total) = out.mean_timing();
    println!("output {}", out_dir.display());
    println!("mode {:?}", out.mode);
    println!("packets {} lio_only {} with_vision {} skipped {}", out.packets.len(), out.counters.lio_only, out.counters.with_vision, out.counters.skipped);
    println!("map_points {}", out.map.len());
    println!("timing_ms vision {:.3} lidar {:.3} total {:.3}", vision * 1e3, lidar * 1e3, total * 1e3);
    if let Some((_, p)) = out.camera_history.last() {
        let i = p.intrinsics;
        println!("camera time_offset {} fx {} fy {} cx {} cy {}", p.time_offset, i.fx, i.fy, i.cx, i.cy);
    }
    if let Some(gt) = source.groundtruth()? {
        if let Ok(ate) = compute_ate(&out.trajectory, &gt) {
            println!("ate_rmse {}", ate.rmse);
        }
    }
    if let Ok(e) = end_to_end_error(&out.trajectory) {
        println!("end_to_end {e}");
    }
    Ok(())
}

fn simulate(scene_config: &Path, output: &Path) -> Result<()> {
    let cfg = SimConfig::read(scene_config)?;
    let sim = Simulation::new(cfg);
    write_dataset(output, &sim.config.calibration(), sim.imu(), sim.sweeps(), sim.frames(), &sim.groundtruth())?;
    println!("dataset {}", output.display());
    println!("imu {} sweeps {} images {}", sim.imu().len(), sim.sweep_indices().count(), sim.image_stamps().len());
    Ok(())
}

fn export_ply(run_dir: &Path, output: Option<PathBuf>, rendered_only: bool) -> Result<()> {
    let points = read_map_csv(&run_dir.join("map.csv"))?;
    let vertices = map_vertices(points.iter().filter(|p| p.rendered || !rendered_only));
    let path = output.unwrap_or_else(|| run_dir.join("map.ply"));
    write_ply(&path, &vertices)?;
    println!("ply {} vertices {}", path.display(), vertices.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => run(&config, output),
        Command::Simulate { scene_config, output } => simulate(&scene_config, &output),
        Command::Eval(EvalCommand::Ate { trajectory, groundtruth }) => (|| {
            let ate = compute_ate(&read_tum(&trajectory)?, &read_tum(&groundtruth)?)?;
            println!("ate_rmse {}", ate.rmse);
            println!("associations {}", ate.associations);
            Ok(())
        })(),
        Command::Eval(EvalCommand::E2e { trajectory }) => (|| {
            println!("end_to_end {}", end_to_end_error(&read_tum(&trajectory)?)?);
            Ok(())
        })(),
        Command::ExportPly { run_dir, output, rendered_only } => export_ply(&run_dir, output, rendered_only),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
