use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pseudospec::config::{Engine, RunConfig};
use pseudospec::Error;

mod commands;
mod output;

/// Environment variable holding the emulator memory budget in bytes.
pub const MEMORY_BUDGET_ENV: &str = "PSEUDOSPEC_MEMORY_BUDGET";

#[derive(Parser, Debug)]
#[command(name = "pseudospec", version, about = "Exciton spectroscopy with pseudomode environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `simulation.engine`.
    #[arg(long, global = true, value_enum)]
    engine: Option<EngineArg>,
    /// Overrides `simulation.shots`.
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides `simulation.threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Population and coherence trajectories.
    Dynamics,
    /// Linear absorption spectrum.
    Absorption,
    /// Rephasing 2D maps for each waiting time.
    #[command(name = "2d")]
    TwoD,
    /// Export pathway circuits and their gate census.
    Circuit,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Dynamics => "dynamics",
            Command::Absorption => "absorption",
            Command::TwoD => "2d",
            Command::Circuit => "circuit",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EngineArg {
    Classical,
    QuantumExact,
    QuantumShots,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Classical => Engine::Classical,
            EngineArg::QuantumExact => Engine::QuantumExact,
            EngineArg::QuantumShots => Engine::QuantumShots,
        }
    }
}

/// Config file, then command-line flags, then the memory-budget variable.
fn resolve(common: &Common) -> pseudospec::Result<RunConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config { field: "--config".into(), msg: "a configuration file is required".into() })?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(e) = common.engine {
        cfg.simulation.engine = e.into();
    }
    if let Some(s) = common.shots {
        cfg.simulation.shots = s;
    }
    if let Some(s) = common.seed {
        cfg.simulation.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.simulation.threads = Some(t);
    }
    if let Ok(v) = std::env::var(MEMORY_BUDGET_ENV) {
        let bytes = v.trim().parse::<u64>().map_err(|_| Error::Config {
            field: MEMORY_BUDGET_ENV.into(),
            msg: format!("`{v}` is not a byte count"),
        })?;
        cfg.simulation.memory_budget = Some(bytes);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MemoryBudget { .. } | Error::Io(_) | Error::Json(_) => 3,
        Error::TraceDrift { .. } | Error::NotHermitian(_) => 4,
        _ => 2,
    }
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::MemoryBudget { .. } => Some(
            "use ancilla_scheme = \"single\", fewer pseudomode levels, --engine classical, \
             or raise PSEUDOSPEC_MEMORY_BUDGET",
        ),
        Error::TraceDrift { .. } => Some("reduce simulation.dt or use propagator = \"exponential\""),
        Error::Unsupported(_) => Some("check the pathway names and delay counts in the config"),
        _ => None,
    }
}

fn run(cli: &Cli) -> pseudospec::Result<()> {
    let cfg = resolve(&cli.common)?;
    if let Some(n) = cfg.simulation.threads {
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = output::OutputDir::create(&cli.common.out)?;
    let files = match cli.command {
        Command::Dynamics => commands::dynamics(&cfg, &out)?,
        Command::Absorption => commands::absorption(&cfg, &out)?,
        Command::TwoD => commands::two_d(&cfg, &out)?,
        Command::Circuit => commands::circuit(&cfg, &out)?,
    };
    out.write_manifest(cli.command.name(), &cfg, &files)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
