mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] iqpkit::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn config(line: usize, msg: impl std::fmt::Display) -> Self {
        CliError::Config(format!("config line {line}: {msg}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(iqpkit::Error::NonFinite(_)) => 3,
            CliError::Core(iqpkit::Error::SizeCap { .. }) => 4,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "iqpkit", version, about = "IQP circuit Born machines: data, training, evaluation and constructions")]
pub struct Cli {
    /// Worker threads for the per-frequency fan-out.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DataKind {
    Parity,
    Worstcase,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum UniversalMode {
    Exact,
    Grid,
    Twobit,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parity-check datasets or a worst-case distribution pair.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 50000)]
        test_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one generator per seed listed in the config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the config's seed list with this one seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from checkpoints already in `out`.
        #[arg(long)]
        resume: bool,
    },
    /// TVD and MMD metrics of a circuit checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Exact target distribution.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Dataset for the empirical metrics.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and verify a circuit reproducing a target distribution.
    Universality {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum)]
        mode: UniversalMode,
        /// Hidden qubits for grid mode.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vanishing-kernel demonstration and worst-case spectral ceiling.
    AdversarialCheck {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Width of the worst-case pair; skipped when absent.
        #[arg(long)]
        worst_n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the re-run (defaults to the recorded one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        // Ignored if a pool already exists, e.g. after a replay hop.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    if let Command::Replay { manifest, out } = &cli.command {
        let (cwd, args) = manifest::load_invocation(manifest, out.as_deref())?;
        std::env::set_current_dir(&cwd)?;
        let replayed = Cli::try_parse_from(std::iter::once("iqpkit".to_string()).chain(args.iter().cloned()))
            .map_err(|e| CliError::Failed(format!("manifest arguments no longer parse: {e}")))?;
        if matches!(replayed.command, Command::Replay { .. }) {
            return Err(CliError::Failed("a manifest cannot record a replay".into()));
        }
        return run(replayed, args);
    }
    manifest::write(&cli.command, &argv)?;
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
