use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fde_relax::cli;
use fde_relax::config::{Command, Config};

/// Relaxation schemes for the fast diffusion equation.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set eps=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Solve for the stationary profile and print the extinction time.
    Stationary,
    /// Run a single simulation.
    Run,
    /// Convergence sweep over eps.
    Sweep,
    /// Decay of the discrete l^q norm past the extinction time.
    Extinction,
    /// Compare the coupled scheme at tiny eps with the implicit fast-diffusion scheme.
    Apcheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Stationary => Command::Stationary,
            Cmd::Run => Command::Run,
            Cmd::Sweep => Command::Sweep,
            Cmd::Extinction => Command::Extinction,
            Cmd::Apcheck => Command::ApCheck,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cmd = Command::from(args.command);
    let result = Config::load(args.config.as_deref(), &args.overrides, cmd)
        .and_then(|cfg| cli::execute(cmd, &cfg));
    match result {
        Ok(out) => {
            if let Err(e) = cli::report(&out, std::io::stdout().lock()) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
