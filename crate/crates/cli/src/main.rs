//! `meanfield`: command-line driver for the mean-field convergence experiments.
//!
//! Exit codes: 0 pass, 1 failure, 2 inconclusive.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meanfield::harness::{
    cross_validate, run_bogoliubov, run_convergence, run_hartree, run_laguerre, ExperimentConfig,
};

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Mean-field limit experiments for weakly interacting bosons")]
struct Cli {
    /// JSON experiment configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the Hartree equation and dump φ_t.
    Hartree,
    /// Exact N-body run for a single N.
    Nbody {
        #[arg(long)]
        particles: usize,
    },
    /// Full convergence sweep with the rate fit.
    Rate,
    /// Bogoliubov kernels and the E₂ correction.
    Bogoliubov,
    /// Cross-oracle validation on the Fock lattice.
    FockCheck,
    /// Table of the coefficients A_m with the Krasikov comparison.
    Laguerre {
        #[arg(long, default_value_t = 6)]
        particles: u64,
    },
}

fn load(cli: &Cli) -> meanfield::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(cli: &Cli, text: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", text.as_ref());
    }
}

fn run(cli: &Cli) -> meanfield::Result<u8> {
    let mut cfg = load(cli)?;
    match &cli.command {
        Command::Hartree => {
            let s = run_hartree(&cfg)?;
            say(cli, serde_json::to_string_pretty(&s)?);
            Ok(0)
        }
        Command::Nbody { particles } => {
            cfg.particles = vec![*particles];
            cfg.validate()?;
            sweep(cli, &cfg)
        }
        Command::Rate => sweep(cli, &cfg),
        Command::Bogoliubov => {
            let path = run_bogoliubov(&cfg)?;
            say(cli, format!("wrote {}", path.display()));
            Ok(0)
        }
        Command::FockCheck => {
            let report = cross_validate(&cfg)?;
            std::fs::create_dir_all(&cfg.output)?;
            let path = cfg.output.join("fock_check.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            for item in &report.items {
                say(cli, format!("({}) {:<13} {}{}", item.id, format!("{:?}", item.status), item.name, note(&item.note)));
            }
            say(cli, format!("overall: {:?}; wrote {}", report.status, path.display()));
            Ok(report.exit_code() as u8)
        }
        Command::Laguerre { particles } => {
            let s = run_laguerre(*particles, &cfg.output)?;
            say(cli, serde_json::to_string_pretty(&s)?);
            Ok(0)
        }
    }
}

fn note(text: &str) -> String {
    if text.is_empty() {
        String::new()
    } else {
        format!(" [{text}]")
    }
}

fn sweep(cli: &Cli, cfg: &ExperimentConfig) -> meanfield::Result<u8> {
    let run = run_convergence(cfg)?;
    let failed = run.records.iter().any(|r| r.status != "ok");
    for r in run.records.iter().filter(|r| (r.t - cfg.t_end).abs() < 1e-9) {
        say(cli, format!("N = {:>3}  t = {:.3}  trace_err = {:.6e}  e2_norm = {:.6e}  [{}]", r.particles, r.t, r.trace_err, r.e2_norm, r.status));
    }
    match run.primary_fit {
        Some(fit) => say(cli, format!("rate fit at t = {}: slope {:.4}, R² {:.4}", cfg.t_end, fit.slope, fit.r_squared)),
        None => say(cli, "rate fit unavailable (fewer than 3 usable N)"),
    }
    say(cli, format!("wrote {} and {}", run.csv_path.display(), run.manifest_path.display()));
    Ok(if failed { 1 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
