use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bsdex_cli::config::ExperimentConfig;
use bsdex_cli::{presets, run};
use bsdex_core::error::Error;
use bsdex_core::io::trajectory_to_csv;

/// Backward-equation solver driven by declarative experiment configs.
#[derive(Parser)]
#[command(name = "bsdex", version, about)]
struct Cli {
    /// Worker threads for parallel sub-solves; 1 forces fully deterministic
    /// sequential execution. RAYON_NUM_THREADS is honored when unset.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-grid backward solves over the scheme x step-count matrix.
    Solve {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Sparse-grid combination runs over the configured level parameters.
    Sparse {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Least-squares Monte Carlo reference runs.
    Lsmc {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Report generator validity for the configured model and grid.
    Validate {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Preset management.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the shipped presets.
    List,
    /// Print a preset's config to stdout.
    Show { name: String },
}

#[derive(clap::Args)]
struct ConfigSource {
    /// Path to a TOML experiment config.
    config: Option<PathBuf>,
    /// Name of a shipped preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override the output CSV path from the config.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let text = match (&self.config, &self.preset) {
            (Some(path), None) => std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?,
            (None, Some(name)) => presets::preset(name)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown preset `{name}`; available: {}",
                        presets::names().join(", ")
                    ))
                })?
                .to_string(),
            _ => return Err(Error::invalid("pass a config path or --preset NAME")),
        };
        ExperimentConfig::parse(&text)
    }
}

fn emit(csv: &str, cfg: &ExperimentConfig, cli_path: &Option<PathBuf>) -> Result<(), Error> {
    let path = cli_path
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned())
        .or_else(|| cfg.output.as_ref().and_then(|o| o.path.clone()));
    match path {
        Some(p) => std::fs::write(&p, csv)
            .map_err(|e| Error::invalid(format!("cannot write {p}: {e}"))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Solve { source } => {
            let cfg = source.load()?;
            let (csv, traj) = run::run_solve(&cfg)?;
            emit(&csv, &cfg, &source.output)?;
            if let (Some(traj), Some(out)) = (traj, &cfg.output) {
                if let Some(tp) = &out.trajectory_path {
                    let text = trajectory_to_csv(&traj, out.trajectory_node_stride);
                    std::fs::write(tp, text)
                        .map_err(|e| Error::invalid(format!("cannot write {tp}: {e}")))?;
                }
            }
            Ok(())
        }
        Command::Sparse { source } => {
            let cfg = source.load()?;
            let (csv, members) = run::run_sparse(&cfg)?;
            emit(&csv, &cfg, &source.output)?;
            eprintln!("{members}");
            Ok(())
        }
        Command::Lsmc { source } => {
            let cfg = source.load()?;
            let csv = run::run_lsmc(&cfg)?;
            emit(&csv, &cfg, &source.output)
        }
        Command::Validate { source } => {
            let cfg = source.load()?;
            print!("{}", run::run_validate(&cfg)?);
            Ok(())
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in presets::names() {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => match presets::preset(name) {
                    Some(text) => print!("{text}"),
                    None => return Err(Error::invalid(format!("unknown preset `{name}`"))),
                },
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::InvalidArgument(_) => ExitCode::from(2),
                Error::Numeric(_) | Error::NumericAt { .. } => ExitCode::from(3),
            }
        }
    }
}
