use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsd1d::config::parse_config;
use qsd1d::pipeline::{run_pipeline, Stage};

/// Quasi-stationary analysis of one-dimensional diffusions killed at 0.
#[derive(Parser)]
#[command(name = "qsd1d", version, about)]
struct Cli {
    /// Path to the experiment config (section.key = value lines).
    #[arg(long, global = true, default_value = "qsd1d.conf")]
    config: String,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Emit SVG charts next to the CSVs.
    #[arg(long, global = true)]
    plot: bool,

    /// Worker threads for the Monte Carlo stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feller boundary classification at 0 and infinity.
    Classify,
    /// Grid, eigensolve, quasi-stationary and quasi-ergodic weights.
    Spectrum,
    /// Killed-path Monte Carlo ensembles.
    Simulate,
    /// Exact conditional-law decay and exponential rate fits.
    Converge,
    /// Weighted-norm convergence bound with explicit constants.
    Thm22,
    /// 1/t error of time-averaged conditional expectations.
    Qergodic,
    /// Everything, in dependency order.
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set thread pool size: {e}");
        }
    }

    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if cli.plot {
        cfg.output.plot = true;
    }

    let stages: Vec<Stage> = match cli.command {
        Command::Classify => vec![Stage::Classify],
        Command::Spectrum => vec![Stage::Spectrum],
        Command::Simulate => vec![Stage::Simulate],
        Command::Converge => vec![Stage::Converge],
        Command::Thm22 => vec![Stage::Thm22],
        Command::Qergodic => vec![Stage::QErgodic],
        Command::All => Stage::all().to_vec(),
    };

    match run_pipeline(&cfg, &stages) {
        Ok(summary) => {
            println!("manifest: {}", summary.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
