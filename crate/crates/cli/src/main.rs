use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cylwave_cli::{dispatch, parse_config, CliError, Command};

#[derive(Parser)]
#[command(name = "cylwave", version, about = "Forward, inversion and verification runs for the cylinder wave problem")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration; omitted means the Test 1 defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Snapshot stride for `forward` (overrides `snapshot_stride`).
    #[arg(long, global = true)]
    stride: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Solve the forward problem for the configured phantom.
    Forward,
    /// Generate noisy synthetic data on a refined grid.
    GenData,
    /// Reconstruct the coefficient from data.
    Invert,
    /// Check the Carleman hypotheses and search admissible constants.
    CarlemanCheck,
    /// Run the Hölder-stability sweep.
    StabilityProbe,
    /// Threshold a reconstruction at a fraction of its maximum.
    Postprocess,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Forward => Command::Forward,
            Cmd::GenData => Command::GenData,
            Cmd::Invert => Command::Invert,
            Cmd::CarlemanCheck => Command::CarlemanCheck,
            Cmd::StabilityProbe => Command::StabilityProbe,
            Cmd::Postprocess => Command::Postprocess,
        }
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stride) = args.stride {
        cfg.snapshot_stride = stride;
    }
    dispatch(args.command.into(), &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = std::env::var("CYLWAVE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // the global pool can only be set once; a failure leaves the default
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cylwave {}: {e}", Command::from(args.command).name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
