use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use percond_cli::{commands, validate, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "percond", version, about = "Effective conductivity of periodic composites with interfacial resistance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at a single eps and write result.json and fields.csv.
    Solve(RunArgs),
    /// Sweep an eps grid and write sweep.csv, fit.json, orders.json and plot.gp.
    Sweep(RunArgs),
    /// Run the identity suite and write validation.json.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the `out` key of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. PERCOND_JOBS takes precedence.
    #[arg(long)]
    jobs: Option<usize>,
}

fn jobs(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var("PERCOND_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(CliError::Config(format!("PERCOND_JOBS must be a positive integer, got {v:?}"))),
        },
        Err(_) => match flag {
            Some(0) => Err(CliError::Config("--jobs must be positive".into())),
            other => Ok(other),
        },
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let args = match &cli.command {
        Command::Solve(a) | Command::Sweep(a) | Command::Validate(a) => a,
    };
    if let Some(k) = jobs(args.jobs)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {k} workers: {e}")))?;
    }
    let cfg = RunConfig::load(&args.config)?;
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("percond-out"));
    let out: &Path = &out;
    match cli.command {
        Command::Solve(_) => {
            let r = commands::solve(&cfg, out)?;
            println!("lambda_eff = {:?}", r.lambda_eff);
        }
        Command::Sweep(_) => {
            let s = commands::sweep(&cfg, out)?;
            println!("{} sweep entries written to {}", s.completed, out.display());
        }
        Command::Validate(_) => {
            validate::validate(&cfg, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("percond: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
