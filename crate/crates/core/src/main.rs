use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corrflow::cache::SpectrumCache;
use corrflow::config::RunConfig;
use corrflow::experiments::{run_experiment, verify};
use corrflow::Result;

/// Exact-spectrum correlation-function experiments on spin chains.
#[derive(Parser)]
#[command(name = "corrflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a JSON config.
    Run {
        config: PathBuf,
        /// Field overrides, e.g. `--spec.length 10 --beta 0.5`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Inspect or clear the spectrum cache (`CORRFLOW_CACHE_DIR`).
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Run the invariant suites for a config's chains only.
    Verify {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Ls,
    /// Remove entries whose spec hash starts with PREFIX, or all of them.
    Rm { prefix: Option<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let cache = SpectrumCache::from_env();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = RunConfig::load_with_overrides(&config, &overrides)?;
            let out = run_experiment(&cfg, &cache)?;
            println!("{}", out.metadata_path().display());
        }
        Command::Verify { config, overrides } => {
            let cfg = RunConfig::load_with_overrides(&config, &overrides)?;
            let rep = verify(&cfg, &cache)?;
            for c in &rep.checks {
                let tag = if c.passed { "ok  " } else { "FAIL" };
                println!("{tag} L={:<2} {:<34} {}", c.length, c.name, c.detail);
            }
            rep.into_result()?;
        }
        Command::Cache { action: CacheAction::Ls } => {
            for e in cache.list()? {
                println!("{}  L={:<2} dim={:<6} {:>10} B  {}", &e.spec_hash[..16], e.length, e.dim, e.bytes, e.path.display());
            }
        }
        Command::Cache { action: CacheAction::Rm { prefix } } => {
            let n = cache.remove(prefix.as_deref())?;
            println!("removed {n} entries");
        }
    }
    Ok(ExitCode::SUCCESS)
}
