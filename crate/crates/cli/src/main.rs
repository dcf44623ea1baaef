use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::Output;
use config::RunConfig;
use error::CliError;

/// Consulted when neither `--out` nor `output_dir` is given.
const OUTPUT_ENV: &str = "SSR_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "ssr", version, about = "Photon-counting statistics and readout optimisation for demolishing readout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` and $SSR_OUTPUT_DIR).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set system.gamma_0=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Count pmfs conditioned on the initial and on the final state.
    Pdf(Common),
    /// Monte-Carlo histograms of the four conditioning classes.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Also write total-variation distances to the analytic pmfs.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// ML error against window length, and error against efficiency.
    ErrorCurve(Common),
    /// Scenario sweep for the fastest configuration meeting a target fidelity.
    Optimize(Common),
}

fn output_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.cloned()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ssr-out"))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (common, extra) = match &cli.command {
        Command::Pdf(c) | Command::ErrorCurve(c) | Command::Optimize(c) => (c, Vec::new()),
        Command::Mc { common, runs, seed, .. } => {
            let mut extra = Vec::new();
            if let Some(r) = runs {
                extra.push(format!("mc.runs={r}"));
            }
            if let Some(s) = seed {
                extra.push(format!("mc.seed={s}"));
            }
            (common, extra)
        }
    };
    let overrides: Vec<String> = common.set.iter().cloned().chain(extra).collect();
    let cfg = RunConfig::load(&common.config, &overrides)?;
    let mut out = Output::new(output_dir(common.out.as_ref(), &cfg))?;
    let config_dir = common.config.parent().unwrap_or(Path::new("."));
    match &cli.command {
        Command::Pdf(_) => commands::pdf(&cfg, &mut out)?,
        Command::Mc { compare, .. } => commands::mc(&cfg, &mut out, *compare)?,
        Command::ErrorCurve(_) => commands::error_curve(&cfg, &mut out)?,
        Command::Optimize(_) => commands::optimize(&cfg, config_dir, &mut out)?,
    }
    Ok(out.written().to_vec())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
