use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oscdamp_cli::{execute, CliError, Command};

#[derive(Parser)]
#[command(name = "oscdamp", version, about = "Damped-oscillator and micromaser analyses from a scenario file")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed; overrides `trajectory.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Liouvillian eigenvalues.
    Spectrum(Common),
    /// Steady-state photon distribution.
    Steady(Common),
    /// Click correlation functions.
    Correlations(Common),
    /// Waiting-time densities.
    Waiting(Common),
    /// Click-counting distributions.
    Counting(Common),
    /// Fano-Mandel factor.
    Fano(Common),
    /// Periodically kicked evolution.
    Kicked(Common),
    /// Monte-Carlo runs with observer accounts.
    Trajectory(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Steady(a) => (Command::Steady, a),
        Sub::Correlations(a) => (Command::Correlations, a),
        Sub::Waiting(a) => (Command::Waiting, a),
        Sub::Counting(a) => (Command::Counting, a),
        Sub::Fano(a) => (Command::Fano, a),
        Sub::Kicked(a) => (Command::Kicked, a),
        Sub::Trajectory(a) => (Command::Trajectory, a),
    };
    let result = match args.threads {
        Some(0) => Err(CliError::Config(vec!["--threads must be positive".into()])),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(vec![e.to_string()])),
        None => Ok(()),
    }
    .and_then(|_| execute(cmd, &args.config, &args.out, args.seed));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
