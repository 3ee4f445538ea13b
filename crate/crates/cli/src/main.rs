use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srsm::scene::SceneSpec;
use srsm_cli::commands::{self, bench_csv};
use srsm_cli::{CliError, CliResult, Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "srsm", version, about = "Building footprints from LiDAR with super-resolved z-images and active contours")]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project the point cloud and fill the z-image (tiled).
    Superres(Common),
    /// Extract building candidates and refine them with the snake.
    Extract(Common),
    /// Score extracted footprints against the reference.
    Evaluate(Common),
    /// Write a synthetic fixture; --config points at a scene spec (default: the standard scene).
    Synth(SynthArgs),
    /// Compare SR against nearest and bilinear at several subsampling factors.
    BenchSr(Common),
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Tile core size in pixels (>= 64).
    #[arg(long)]
    tile_size: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

fn load(c: &Common) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        tile_size: c.tile_size,
        jobs: c.jobs,
        out_dir: c.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Superres(c) => {
            let cfg = load(&c)?;
            let out = commands::cmd_superres(&cfg)?;
            let iters: Vec<usize> = out.traces.iter().map(|t| t.iterations()).collect();
            println!(
                "z-image {}x{} written to {} (iterations per tile: {iters:?})",
                out.gt.rows,
                out.gt.cols,
                cfg.out_path(commands::ZIMAGE_FILE).display()
            );
        }
        Command::Extract(c) => {
            let cfg = load(&c)?;
            let out = commands::cmd_extract(&cfg)?;
            println!(
                "{} of {} candidates refined, footprints in {}",
                out.buildings.len(),
                out.candidates,
                cfg.out_path(commands::FOOTPRINTS_FILE).display()
            );
        }
        Command::Evaluate(c) => {
            let cfg = load(&c)?;
            print!("{}", commands::cmd_evaluate(&cfg)?.to_table());
        }
        Command::Synth(s) => {
            let spec = match &s.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                        std::io::ErrorKind::NotFound => CliError::missing(p),
                        _ => e.into(),
                    })?;
                    SceneSpec::from_toml_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
                }
                None => SceneSpec::standard(),
            };
            let scene = commands::cmd_synth(&spec, s.seed, &s.out)?;
            println!(
                "{} points, {} footprints written to {}",
                scene.cloud.len(),
                scene.footprints.len(),
                s.out.display()
            );
        }
        Command::BenchSr(c) => {
            let cfg = load(&c)?;
            print!("{}", bench_csv(&commands::cmd_bench_sr(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
