use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_inversion::harness::{cmd_forward, cmd_invert, cmd_make_obs, cmd_phantom, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "hybrid-inv", version, about = "Hybrid FE/FD wave solver and coefficient reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed; overrides `[noise] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve with the phantom coefficients.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Run the plain finite-difference reference scheme instead.
        #[arg(long)]
        pure_fd: bool,
    },
    /// Synthetic noisy observations.
    MakeObs {
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct eps (and sigma) from observations.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        obs: PathBuf,
        /// Use the adaptive refinement driver.
        #[arg(long)]
        adaptive: bool,
    },
    /// Write the configured voxel phantom.
    Phantom {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), HarnessError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Forward { common, pure_fd } => {
            let (cfg, out) = load(&common)?;
            cmd_forward(&cfg, &out, pure_fd)?;
            println!("wrote {}", out.join("trace.csv").display());
        }
        Command::MakeObs { common } => {
            let (cfg, out) = load(&common)?;
            cmd_make_obs(&cfg, &out, common.seed)?;
            println!("wrote {}", out.join("obs.csv").display());
        }
        Command::Invert { common, obs, adaptive } => {
            let (cfg, out) = load(&common)?;
            let s = cmd_invert(&cfg, &obs, &out, adaptive)?;
            println!(
                "levels {}  final J {:.6e}  max eps {:.4} at {:?}  stop {}",
                s.levels.len(),
                s.final_j,
                s.max_eps,
                s.max_eps_at,
                s.stop_reason
            );
        }
        Command::Phantom { common } => {
            let (cfg, out) = load(&common)?;
            let path = cmd_phantom(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
