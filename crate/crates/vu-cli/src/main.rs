//! `vu` — virtual unfolded view generation for hollow-organ CT volumes.
//!
//! Exit codes: 0 converged (or subcommand succeeded), 1 stage error,
//! 2 usage/config error, 3 non-convergence (diverged or max-iterations).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vu_cli::config::PipelineConfig;
use vu_cli::pipeline::{
    format_sweep_table, load_unfolded, run_sweep, run_unfold_pipeline, UnfoldInputs,
};
use vu_core::dynamics::StopReason;
use vu_core::phantom::{gen_phantom, PhantomShape, PhantomSpec};
use vu_core::unfolded_view::{render_view, GridSpec, RenderMode, UnfoldedVolume};
use vu_core::volume::write_volume;
use vu_core::Vec3;

const EXIT_OK: u8 = 0;
const EXIT_STAGE_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vu",
    version,
    about = "Virtual unfolded view generation for hollow-organ CT volumes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tube phantom (scalar GVOL, labels GVOL, truth JSON).
    Phantom(PhantomArgs),
    /// Run the full unfolding pipeline on a scalar volume.
    Unfold(UnfoldArgs),
    /// Run the pipeline once per kappa value and report the trends.
    Sweep(SweepArgs),
    /// Re-render an existing unfolded volume to a PPM image.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ShapeArg {
    Straight,
    J,
}

#[derive(Args)]
struct PhantomArgs {
    /// Tube shape.
    #[arg(long, value_enum)]
    shape: ShapeArg,
    /// Outer tube radius in mm.
    #[arg(long)]
    radius: f64,
    /// Wall thickness in mm.
    #[arg(long)]
    wall: f64,
    /// Lumen length in mm.
    #[arg(long)]
    length: f64,
    /// Voxel spacing "sx,sy,sz" in mm.
    #[arg(long, default_value = "1,1,1", value_parser = parse_triple)]
    spacing: [f64; 3],
    /// Output directory.
    #[arg(long, default_value = "phantom_out")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Scalar volume (GVOL).
    #[arg(long)]
    volume: PathBuf,
    /// Optional label volume (GVOL, labels 1=wall 2=air); air/wall extraction
    /// is skipped where labels are present.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Cardia landmark "x,y,z" in world mm.
    #[arg(long, value_parser = parse_triple)]
    cardia: [f64; 3],
    /// Pylorus landmark "x,y,z" in world mm.
    #[arg(long, value_parser = parse_triple)]
    pylorus: [f64; 3],
    /// JSON config; flag overrides win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hexahedron edge length in voxels (overrides config).
    #[arg(long)]
    d: Option<usize>,
    /// Write the wall-model diagnostic dump.
    #[arg(long)]
    dump_model: bool,
    /// Write the plane/base-line/destination diagnostic dump.
    #[arg(long)]
    dump_geometry: bool,
}

#[derive(Args)]
struct UnfoldArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Termination threshold kappa in mm (overrides config).
    #[arg(long)]
    kappa: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "unfold_out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comma-separated kappa values, e.g. "0.1,0.2,0.5".
    #[arg(long, value_parser = parse_f64_list)]
    kappas: F64List,
    /// Output directory (one subdirectory per kappa).
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Unfolded volume (GVOL).
    #[arg(long)]
    unfolded: PathBuf,
    /// Mask sidecar (GVOL).
    #[arg(long)]
    mask: PathBuf,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40.0)]
    window_center: f64,
    #[arg(long, default_value_t = 400.0)]
    window_width: f64,
    #[arg(long, value_enum, default_value = "mip")]
    mode: RenderModeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RenderModeArg {
    Mip,
    SlabAverage,
}

#[derive(Clone, Debug)]
struct F64List(Vec<f64>);

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("component {i} of {s:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_f64_list(s: &str) -> Result<F64List, String> {
    let mut out = Vec::new();
    for p in s.split(',') {
        let p = p.trim();
        if p.is_empty() {
            continue;
        }
        out.push(p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?);
    }
    if out.is_empty() {
        return Err("kappa list is empty".into());
    }
    Ok(F64List(out))
}

fn load_config(args: &PipelineArgs) -> Result<PipelineConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| format!("{e:#}"))?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = args.d {
        cfg.model.d = d;
    }
    cfg.validate().map_err(|e| format!("{e:#}"))?;
    Ok(cfg)
}

fn unfold_inputs(args: &PipelineArgs, out: &PathBuf) -> UnfoldInputs {
    UnfoldInputs {
        volume_path: args.volume.clone(),
        labels_path: args.labels.clone(),
        cardia: Vec3::new(args.cardia[0], args.cardia[1], args.cardia[2]),
        pylorus: Vec3::new(args.pylorus[0], args.pylorus[1], args.pylorus[2]),
        out_dir: out.clone(),
        dump_model: args.dump_model,
        dump_geometry: args.dump_geometry,
    }
}

fn cmd_phantom(args: &PhantomArgs) -> u8 {
    let shape = match args.shape {
        ShapeArg::Straight => PhantomShape::StraightTube,
        ShapeArg::J => PhantomShape::JTube,
    };
    let spec = PhantomSpec {
        shape,
        radius_mm: args.radius,
        wall_mm: args.wall,
        length_mm: args.length,
        spacing: (args.spacing[0], args.spacing[1], args.spacing[2]),
        dims: None,
    };
    let (scalar, labels, truth) = match gen_phantom(&spec) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: creating {}: {e}", args.out.display());
        return EXIT_STAGE_ERROR;
    }
    let vol_path = args.out.join("phantom_volume.gvol");
    let labels_path = args.out.join("phantom_labels.gvol");
    let truth_path = args.out.join("phantom_truth.json");
    let result = write_volume(&scalar, &vol_path)
        .map_err(|e| e.to_string())
        .and_then(|_| write_volume(&labels, &labels_path).map_err(|e| e.to_string()))
        .and_then(|_| {
            serde_json::to_string_pretty(&truth)
                .map_err(|e| e.to_string())
                .and_then(|json| {
                    std::fs::write(&truth_path, json + "\n").map_err(|e| e.to_string())
                })
        });
    match result {
        Ok(()) => {
            println!("wrote {}", vol_path.display());
            println!("wrote {}", labels_path.display());
            println!("wrote {}", truth_path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_STAGE_ERROR
        }
    }
}

fn cmd_unfold(args: &UnfoldArgs) -> u8 {
    let mut cfg = match load_config(&args.pipeline) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(kappa) = args.kappa {
        cfg.dynamics.kappa = kappa;
        if let Err(e) = cfg.validate() {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    }
    let inputs = unfold_inputs(&args.pipeline, &args.out);
    match run_unfold_pipeline(&cfg, &inputs) {
        Ok(outcome) => {
            println!(
                "stop: {} after {} iterations, D {:.4} -> {:.4} mm",
                outcome.stop, outcome.iterations, outcome.initial_d, outcome.final_d
            );
            if let Some(d) = outcome.defects {
                println!(
                    "defects: overlap {:.6}, broken {:.6}, bending rms {:.4} mm",
                    d.overlap_fraction, d.broken_fraction, d.bending_rms_mm
                );
            }
            println!("manifest: {}", outcome.manifest_path.display());
            match outcome.stop {
                StopReason::Converged => EXIT_OK,
                StopReason::MaxIterations | StopReason::Diverged => EXIT_NOT_CONVERGED,
            }
        }
        Err(e) => {
            eprintln!("error in {e}");
            EXIT_STAGE_ERROR
        }
    }
}

fn cmd_sweep(args: &SweepArgs) -> u8 {
    let cfg = match load_config(&args.pipeline) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let inputs = unfold_inputs(&args.pipeline, &args.out);
    match run_sweep(&cfg, &inputs, &args.kappas.0) {
        Ok(rows) => {
            print!("{}", format_sweep_table(&rows));
            if rows.iter().all(|r| r.error.is_some()) {
                EXIT_STAGE_ERROR
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error in {e}");
            EXIT_STAGE_ERROR
        }
    }
}

fn cmd_render(args: &RenderArgs) -> u8 {
    if !(args.window_width > 0.0) {
        eprintln!("error: window width must be positive, got {}", args.window_width);
        return EXIT_USAGE;
    }
    let (volume, mask) = match load_unfolded(&args.unfolded, &args.mask) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error in {e}");
            return EXIT_STAGE_ERROR;
        }
    };
    if volume.dims() != mask.dims() {
        eprintln!(
            "error: volume dims {:?} do not match mask dims {:?}",
            volume.dims(),
            mask.dims()
        );
        return EXIT_STAGE_ERROR;
    }
    // The GVOL pair carries no plane frame; rendering only needs the grid
    // topology, so an axis-aligned spec suffices.
    let grid = GridSpec {
        origin: Vec3::zeros(),
        axes: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
        spacing: volume.spacing(),
        dims: volume.dims(),
    };
    let uv = UnfoldedVolume { grid, volume, mask };
    let mode = match args.mode {
        RenderModeArg::Mip => RenderMode::Mip,
        RenderModeArg::SlabAverage => RenderMode::SlabAverage,
    };
    match render_view(&uv, args.window_center, args.window_width, mode) {
        Ok(image) => match std::fs::write(&args.out, image.to_ppm()) {
            Ok(()) => {
                println!("wrote {}", args.out.display());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: writing {}: {e}", args.out.display());
                EXIT_STAGE_ERROR
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_STAGE_ERROR
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Phantom(args) => cmd_phantom(args),
        Command::Unfold(args) => cmd_unfold(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Render(args) => cmd_render(args),
    };
    ExitCode::from(code)
}
