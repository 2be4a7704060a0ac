use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cqrlab_cli::commands::{cmd_baseline, cmd_collect, cmd_eval, cmd_plot, cmd_train, Common};
use cqrlab_cli::Result;
use cqrlab_core::agents::Algo;
use cqrlab_core::harness::Mode;
use cqrlab_core::rrm::BaselineKind;

// glibc malloc fragments badly under the interleaving of replay-buffer
// allocations with the GEMM packing buffers.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "cqrlab",
    version,
    about = "Risk-averse offline RL experiments for UAV and RRM environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common {
            config: a.config,
            seed: a.seed,
            out: a.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the online DQN behaviour policy and extract an offline dataset.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        /// Fraction of the most recent transitions to keep.
        #[arg(long)]
        fraction: Option<f64>,
        /// Dataset output path (default: <out>/<env>.dataset.jsonl).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train one algorithm online or from a dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        algo: Algo,
        #[arg(long, default_value = "offline")]
        mode: Mode,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a fixed scheduler (random, greedy, rr, itlinq).
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        kind: BaselineKind,
    },
    /// Draw report CSVs as an SVG line chart.
    Plot {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long, default_value = "mean_return")]
        metric: String,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            common,
            fraction,
            dataset,
        } => cmd_collect(&common.into(), fraction, dataset).map(drop),
        Command::Train {
            common,
            algo,
            mode,
            dataset,
        } => cmd_train(&common.into(), algo, mode, dataset.as_deref()).map(drop),
        Command::Eval { common, checkpoint } => cmd_eval(&common.into(), &checkpoint).map(drop),
        Command::Baseline { common, kind } => cmd_baseline(&common.into(), kind).map(drop),
        Command::Plot { csvs, metric, out } => cmd_plot(&csvs, &metric, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
