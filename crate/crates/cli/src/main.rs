use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqloc::pipeline::Mode;
use seqloc_cli::{cmd_ablate, cmd_eval, cmd_run, cmd_simulate, load_config, load_frames, CliError};

#[derive(Parser)]
#[command(name = "seqloc", version, about = "Temporal LiDAR relocalization on synthetic sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML); defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sequence and write it as JSON lines.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output sequence file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline on a sequence.
    Run {
        #[command(flatten)]
        common: Common,
        /// Sequence file; simulated from the configuration when absent.
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Run all three modes on the same sequence and seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sequence: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize one trajectory table or compare two.
    Eval {
        table_a: PathBuf,
        table_b: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: seqloc::Error| e.to_string())
}

fn with_pool<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Config("--threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, out } => {
            let cfg = load_config(common.config.as_deref(), common.seed, None)?;
            let n = with_pool(common.threads, || cmd_simulate(&cfg, &out))?;
            eprintln!("wrote {n} frames to {}", out.display());
        }
        Command::Run {
            common,
            sequence,
            out,
            mode,
        } => {
            let cfg = load_config(common.config.as_deref(), common.seed, mode)?;
            with_pool(common.threads, || {
                let frames = load_frames(&cfg, sequence.as_deref())?;
                cmd_run(&cfg, &frames, &out)
            })?;
            eprintln!("wrote report to {}", out.display());
        }
        Command::Ablate { common, sequence, out } => {
            let cfg = load_config(common.config.as_deref(), common.seed, None)?;
            let paths = with_pool(common.threads, || {
                let frames = load_frames(&cfg, sequence.as_deref())?;
                cmd_ablate(&cfg, &frames, &out)
            })?;
            print!("{}", std::fs::read_to_string(&paths[0]).unwrap_or_default());
        }
        Command::Eval { table_a, table_b } => {
            print!("{}", cmd_eval(&table_a, table_b.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
