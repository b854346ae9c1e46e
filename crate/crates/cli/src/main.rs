use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nucdecay_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "nucdecay", version, about = "Collective decay of dipole-coupled Moessbauer nuclei")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a configuration entry, e.g. `--set geometry.incidence_angle=0.05`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coupling parameter K versus incidence angle.
    Kscan,
    /// Trajectories of the reduced model and/or a finite chain.
    Evolve,
    /// Cumulant equations against exact master-equation evolution.
    OracleCompare,
    /// Two-chain interferometer intensity and beat minima.
    Interfere,
    /// K convergence, deviation metrics and phase comparisons versus N.
    FiniteSize,
    /// Print the resolved configuration and its hash.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={}", toml::Value::String(out.display().to_string())));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    let files = match cli.command {
        Command::Kscan => commands::kscan(&cfg)?,
        Command::Evolve => commands::evolve(&cfg)?,
        Command::OracleCompare => commands::oracle_compare(&cfg)?,
        Command::Interfere => commands::interfere(&cfg)?,
        Command::FiniteSize => commands::finite_size(&cfg)?,
        Command::ShowConfig => {
            println!("# config_hash: {}\n{}", cfg.hash(), cfg.to_toml());
            return Ok(());
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nucdecay: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
