use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gclind::{run_scenario, validate_config, RunOptions, ScenarioKind, EXIT_OK, EXIT_VALIDATION};

#[derive(Parser)]
#[command(
    name = "gclind",
    version,
    about = "Grand-canonical Lindblad dynamics and sector sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a state and write the trajectory
    Evolve(Args),
    /// Compute the steady states of a model
    Steady(Args),
    /// Check an equilibrium condition on a set of jump operators
    Check(Args),
    /// Extract the chemical potential from a reservoir energy model
    #[command(name = "mu-extract")]
    MuExtract(Args),
    /// Run the Metropolis protocol over particle-number sectors
    Sample(Args),
    /// Check a config without running it
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Scenario config (JSON)
    #[arg(long, short, value_name = "PATH", conflicts_with = "path")]
    config: Option<PathBuf>,
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    path: Option<PathBuf>,
    /// Output directory [default: ./out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed, overriding numerics.seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    quiet: bool,
}

impl Args {
    fn config_path(&self) -> PathBuf {
        self.config
            .clone()
            .or_else(|| self.path.clone())
            .expect("clap enforces a config path")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Evolve(a) => (Some(ScenarioKind::Evolve), a),
        Command::Steady(a) => (Some(ScenarioKind::Steady), a),
        Command::Check(a) => (Some(ScenarioKind::Check), a),
        Command::MuExtract(a) => (Some(ScenarioKind::MuExtract), a),
        Command::Sample(a) => (Some(ScenarioKind::Sample), a),
        Command::Validate(a) => (None, a),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if args.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();
    let path = args.config_path();

    let Some(kind) = kind else {
        let report = validate_config(&path);
        if report.is_ok() {
            if !args.quiet {
                println!("OK ({})", report.kind.map_or("unknown", ScenarioKind::as_str));
            }
            return ExitCode::from(EXIT_OK as u8);
        }
        for d in &report.defects {
            eprintln!("{d}");
        }
        return ExitCode::from(EXIT_VALIDATION as u8);
    };

    let opts = RunOptions {
        out_dir: args.out.clone(),
        seed: args.seed,
    };
    match run_scenario(&path, Some(kind), &opts) {
        Ok(summary) => {
            if !args.quiet {
                for line in &summary.lines {
                    println!("{line}");
                }
                for f in &summary.files {
                    println!("wrote {}", f.display());
                }
            }
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
