use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod experiment;
mod output;

use config::Loaded;
use experiment::{execute, CliError, Task};

#[derive(Parser)]
#[command(name = "nimfa", version, about = "Simulate local density-dependent Markov processes on hypergraphs and compare them with mean-field approximations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for replica ensembles; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the network and write it as a hypergraph file.
    Generate(Common),
    /// Simulate replicas and write mean state fractions and one event log.
    Simulate(Common),
    /// Solve the mean-field system.
    Nimfa(Common),
    /// Solve the reduced system named in `[outputs.reduction]`.
    Reduce(Common),
    /// Run coupled replicas and write the error report.
    Couple(Common),
    /// Error report, bound report and the optional scaling study.
    Analyze(Common),
    /// Everything requested under `[outputs]`.
    Run(Common),
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, CliError> {
    let mut loaded = Loaded::from_path(path).map_err(|msg| {
        CliError::Validation(vec![config::Diagnostic { field: "config".into(), message: msg, capacity: false }])
    })?;
    if seed.is_some() {
        loaded.config.seed = seed;
    }
    Ok(loaded)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (task, name, common) = match cli.command {
        Command::Validate { config, seed } => {
            let loaded = load(&config, seed)?;
            let diagnostics = experiment::task_config(&loaded, Task::Run)?.validate();
            if diagnostics.is_empty() {
                println!("ok: config-hash {}", loaded.hash());
                return Ok(());
            }
            return Err(CliError::Validation(diagnostics));
        }
        Command::Generate(c) => (Task::Generate, "generate", c),
        Command::Simulate(c) => (Task::Simulate, "simulate", c),
        Command::Nimfa(c) => (Task::Nimfa, "nimfa", c),
        Command::Reduce(c) => (Task::Reduce, "reduce", c),
        Command::Couple(c) => (Task::Couple, "couple", c),
        Command::Analyze(c) => (Task::Analyze, "analyze", c),
        Command::Run(c) => (Task::Run, "run", c),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let loaded = load(&common.config, common.seed)?;
    let manifest = execute(&loaded, task, name, &common.out_dir)?;
    for path in manifest.outputs.values() {
        println!("{path}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
