use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use strip_vortex_cli::commands::{self, OUT_ENV};
use strip_vortex_core::load_config;

#[derive(Parser)]
#[command(name = "strip-vortex", version, about = "Steady vortex patches past an obstacle in a strip")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the environment and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Green function data: ρ, λ₀, I_top, far coefficients and the Robin field.
    Green(Common),
    /// Kirchhoff-Routh landscapes and minimizers for the configured regions.
    Landscape(Common),
    /// One patch solve at the configured ε.
    Solve(Common),
    /// Patch solves over the configured ε list.
    Sweep(Common),
    /// Full invariant suite; exits nonzero if any check fails.
    Checks(Common),
}

fn run(command: &Command, common: &Common) -> strip_vortex_core::Result<bool> {
    let config = load_config(&common.config)?;
    let out = commands::output_dir(common.out.as_deref(), std::env::var_os(OUT_ENV).map(PathBuf::from), &config);
    info!("writing to {}", out.display());
    match command {
        Command::Green(_) => {
            let s = commands::green(&config, &out)?;
            println!("lambda0 = {:.12e}, I_top = {:.12e}, Gamma = {:.12e}", s.lambda0, s.i_top, s.gamma);
        }
        Command::Landscape(_) => {
            let s = commands::landscape(&config, &out)?;
            for r in &s.regions {
                for m in &r.minimizers {
                    println!("{:?}: ({:.6}, {:.6}) value {:.10e}", m.region, m.location.x1, m.location.x2, m.value);
                }
            }
        }
        Command::Solve(_) => {
            let s = commands::solve_patch(&config, &out)?;
            let r = &s.report;
            println!(
                "converged = {}, iterations = {}, support = {}, mu = {:.10e}, energy = {:.10e}",
                r.converged, r.iterations, r.support_cells, r.mu, r.energy
            );
            return Ok(r.converged);
        }
        Command::Sweep(_) => {
            let s = commands::sweep(&config, &out)?;
            println!("mu drift = {:.4e}, diameter ratio = {:.4}", s.sweep.mu_drift, s.sweep.diameter_ratio);
            return Ok(s.sweep.rows.iter().all(|r| r.converged) && s.exterior_negative != Some(false));
        }
        Command::Checks(_) => {
            let report = commands::checks(&config, &out)?;
            for c in &report.checks {
                println!("{} [{}] {}: {:.6e} (limit {:.6e})", if c.passed { "ok  " } else { "FAIL" }, c.criterion, c.name, c.value, c.limit);
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Green(c) | Command::Landscape(c) | Command::Solve(c) | Command::Sweep(c) | Command::Checks(c) => c,
    };
    let level = if common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli.command, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
