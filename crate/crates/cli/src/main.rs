use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ucbench_cli::{exit_code, run_from_path, RunOptions};

#[derive(Parser)]
#[command(name = "ucbench", version, about = "Numerical checks for quantitative unique continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in the configuration.
    Suite(Common),
    ValidateWeight(Common),
    CarlemanSweep(Common),
    StabilityRun(Common),
    StokesCheck(Common),
    InterpNorms(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "ucbench-out")]
    out: PathBuf,
    /// Threads for the parallel parts. Defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace every seed in the configuration.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UCBENCH_LOG", "info")).init();
    let cli = Cli::parse();
    let (kind, c) = match cli.command {
        Command::Suite(c) => (None, c),
        Command::ValidateWeight(c) => (Some("validate-weight"), c),
        Command::CarlemanSweep(c) => (Some("carleman-sweep"), c),
        Command::StabilityRun(c) => (Some("stability-run"), c),
        Command::StokesCheck(c) => (Some("stokes-check"), c),
        Command::InterpNorms(c) => (Some("interp-norms"), c),
    };
    if c.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    let opts = RunOptions {
        out: c.out,
        kind: kind.map(String::from),
        workers: c.workers,
        seed_override: c.seed_override,
    };
    match run_from_path(&c.config, &opts) {
        Ok(report) => {
            for e in &report.experiments {
                println!("{:<28} {}", e.name, if e.pass { "PASS" } else { "FAIL" });
                for ch in e.checks.iter().filter(|c| !c.pass) {
                    println!("    failed: {}: {}", ch.name, ch.detail);
                }
                if let Some(err) = &e.error {
                    println!("    error: {err}");
                }
            }
            println!("report: {}", opts.out.join("report.json").display());
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
