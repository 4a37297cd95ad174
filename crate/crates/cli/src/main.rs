mod commands;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "ssie2d", version, about = "TM scattering by connected penetrable and PEC cylinders")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Persistent DSAO cache file, loaded if present and rewritten afterwards.
    #[arg(long, global = true, value_name = "PATH")]
    dsao_cache: Option<PathBuf>,
    /// Maximum Gauss order for pair integrals.
    #[arg(long, global = true)]
    gauss_order: Option<usize>,
    /// Reserved; every stage is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = ConditionArg::Auto)]
    condition: ConditionArg,
    /// Output directory (created if missing).
    #[arg(short, long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConditionArg {
    Auto,
    Svd,
    OneNorm,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scene and write boundary fields.
    Solve { scene: PathBuf },
    /// Solve and write the bistatic echo width.
    Rcs {
        scene: PathBuf,
        /// start:stop:step in degrees, stop exclusive.
        #[arg(long, default_value = "0:360:1", allow_hyphen_values = true)]
        angles: String,
    },
    /// Solve and write total E_z on a grid.
    Nearfield {
        scene: PathBuf,
        /// xmin:xmax:nx,ymin:ymax:ny
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// Independent solves over a frequency grid.
    Sweep {
        scene: PathBuf,
        #[arg(long)]
        fmin: f64,
        #[arg(long)]
        fmax: f64,
        #[arg(long)]
        steps: usize,
        /// Keep the mesh built at this frequency instead of re-meshing.
        #[arg(long, value_name = "HZ")]
        mesh_frequency: Option<f64>,
        /// x,y of the point whose |E| is reported.
        #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
        probe: String,
    },
    /// Compare reference cylinders with the series solution.
    Validate {
        /// circle-dielectric, circle-pec, circle-coated or circle-pec-core.
        #[arg(required = true)]
        cases: Vec<String>,
        #[arg(long, default_value_t = 20.0)]
        density: f64,
        #[arg(long, default_value_t = 300e6)]
        frequency: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSIE2D_LOG", "off")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { scene } => commands::solve(&cli.common, &scene),
        Command::Rcs { scene, angles } => commands::rcs(&cli.common, &scene, &angles),
        Command::Nearfield { scene, grid } => commands::nearfield(&cli.common, &scene, &grid),
        Command::Sweep {
            scene,
            fmin,
            fmax,
            steps,
            mesh_frequency,
            probe,
        } => commands::sweep(&cli.common, &scene, fmin, fmax, steps, mesh_frequency, &probe),
        Command::Validate {
            cases,
            density,
            frequency,
        } => commands::validate(&cli.common, &cases, density, frequency),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssie2d: {}", e.describe());
            ExitCode::from(e.exit_code())
        }
    }
}
