use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use intersyn_cli::commands::{self, SampleRequest};
use intersyn_cli::error::{EXIT_INVALID, EXIT_OK};
use intersyn_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "intersyn", version, about = "Interleaved solo and interaction motion synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Build interleaved training buckets from a corpus.
    Interleave {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the denoiser and, unless disabled, the coordinator.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        buckets: PathBuf,
    },
    /// Generate motion for a text prompt.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
        /// First frame of the interaction segment.
        #[arg(long, default_value_t = 0)]
        t_i: usize,
        /// First frame of the solo segment; omit for a single interaction clip.
        #[arg(long)]
        t_s: Option<usize>,
        /// Total frames; defaults to the training length.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Compute the metrics report against a corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("INTERSYN_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("INTERSYN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let cfg = |c: &Common| RunConfig::resolve(c.config.as_deref(), c.seed);
    match cli.command {
        Command::Synth { common } => commands::synth(&cfg(&common)?, &common.out),
        Command::Interleave { common, corpus } => commands::interleave(&cfg(&common)?, &corpus, &common.out),
        Command::Train { common, buckets } => commands::train(&cfg(&common)?, &buckets, &common.out),
        Command::Sample { common, checkpoint, text, t_i, t_s, frames } => {
            let req = SampleRequest { text, t_i, t_s, frames };
            commands::sample(&cfg(&common)?, &checkpoint, &req, &common.out)
        }
        Command::Eval { common, checkpoint, corpus } => {
            commands::eval(&cfg(&common)?, &checkpoint, &corpus, &common.out)
        }
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
