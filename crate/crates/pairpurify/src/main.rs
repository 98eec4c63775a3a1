use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairpurify::config::{self, CliOverrides, OutputFormat};

/// Exact simulator for two-pair polarization-entanglement purification.
#[derive(Parser)]
#[command(name = "pairpurify", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML).
    config: PathBuf,
    /// Compare simulated values against the closed-form reference and
    /// exit nonzero on disagreement beyond 1e-10.
    #[arg(long)]
    verify: bool,
    /// Override the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $PAIRPURIFY_OUT_DIR, then config, then ./out).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the photon-number truncation.
    #[arg(long)]
    nmax: Option<u32>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment from a configuration file.
    Run(CommonArgs),
    /// Execute a parameter sweep (the config must have kind = "sweep").
    Sweep(CommonArgs),
    /// Run with oracle verification on (same as `run --verify`).
    Verify(CommonArgs),
}

fn overrides_from(args: &CommonArgs, force_verify: bool) -> Result<CliOverrides, String> {
    let format = match args.format.as_deref() {
        None => None,
        Some("csv") => Some(OutputFormat::Csv),
        Some("json") => Some(OutputFormat::Json),
        Some(other) => return Err(format!("unknown --format \"{other}\" (csv or json)")),
    };
    Ok(CliOverrides {
        verify: args.verify || force_verify,
        seed: args.seed,
        out_dir: args.out_dir.clone(),
        n_max: args.nmax,
        format,
    })
}

fn execute(args: &CommonArgs, force_verify: bool, require_sweep: bool) -> ExitCode {
    let overrides = match overrides_from(args, force_verify) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let config = match config::parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("invalid configuration:");
            for p in &errors.problems {
                eprintln!("  - {p}");
            }
            return ExitCode::from(2);
        }
    };
    if require_sweep && config.kind != config::ExperimentKind::Sweep {
        eprintln!("error: `sweep` expects kind = \"sweep\" (got \"{}\")", config.kind);
        return ExitCode::from(2);
    }
    match config::execute(&config, &overrides) {
        Ok(report) => {
            println!("{}", report.human);
            for artifact in &report.artifacts {
                println!("wrote {}", artifact.display());
            }
            if report.verify_failures > 0 {
                eprintln!(
                    "verification FAILED: {} value(s) beyond tolerance",
                    report.verify_failures
                );
                ExitCode::FAILURE
            } else {
                if overrides.verify {
                    println!("verification passed");
                }
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => execute(args, false, false),
        Command::Sweep(args) => execute(args, false, true),
        Command::Verify(args) => execute(args, true, false),
    }
}
