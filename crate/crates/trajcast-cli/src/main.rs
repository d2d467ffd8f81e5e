use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trajcast_cli::commands::{
    cmd_ablate, cmd_eval, cmd_generate, cmd_nowcast, cmd_train, AblateArgs, EvalSplit,
    OutputFormat, TrainArgs,
};
use trajcast_core::ablation::Variant;

#[derive(Parser)]
#[command(
    name = "trajcast",
    about = "Nowcast the next same-timestamp group of laboratory events within a hospital visit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => OutputFormat::Text,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl From<SplitArg> for EvalSplit {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::All => EvalSplit::All,
            SplitArg::Train => EvalSplit::Train,
            SplitArg::Val => EvalSplit::Val,
            SplitArg::Test => EvalSplit::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblateArg {
    D,
    P,
    Dp,
    Dpm,
}

impl From<AblateArg> for Variant {
    fn from(a: AblateArg) -> Self {
        match a {
            AblateArg::D => Variant::NoDecay,
            AblateArg::P => Variant::NoPeriodic,
            AblateArg::Dp => Variant::NoDecayPeriodic,
            AblateArg::Dpm => Variant::NoDecayPeriodicMask,
        }
    }
}

#[derive(Args)]
struct Shared {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory file with planted temporal structure.
    Generate {
        #[command(flatten)]
        shared: Shared,
        /// Generator seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output trajectory file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model: split, optimize, evaluate on the test split, write a
    /// checkpoint and a per-epoch metrics log.
    Train {
        #[command(flatten)]
        shared: Shared,
        /// Trajectory file.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Per-epoch CSV log path (default: checkpoint path with .log.csv).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Train an ablated variant.
        #[arg(long, value_enum)]
        ablate: Option<AblateArg>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a trajectory file.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate all instances or re-derive one split of the file.
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
    },
    /// Rank upcoming lab labels for a single patient history.
    Nowcast {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Trajectory file holding exactly one trajectory.
        #[arg(long)]
        history_file: PathBuf,
        /// Target time in hours since visit start (default: last event time
        /// plus the training median panel gap).
        #[arg(long)]
        at_time: Option<f64>,
    },
    /// Train and evaluate the full model and the w/o D, P, DP and DPM
    /// variants under identical seeds and splits.
    Ablate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated seed list for a per-seed breakdown.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Write the per-(variant, seed) table as CSV.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { shared, seed, out } => {
            cmd_generate(shared.config.as_deref(), *seed, out, shared.format.into())
        }
        Command::Train { shared, data, out_checkpoint, log, ablate, seed } => {
            cmd_train(TrainArgs {
                data,
                config: shared.config.as_deref(),
                out_checkpoint,
                log: log.as_deref(),
                ablate: ablate.map(Into::into),
                seed: *seed,
                format: shared.format.into(),
            })
        }
        Command::Eval { shared, checkpoint, data, split } => {
            cmd_eval(checkpoint, data, (*split).into(), shared.format.into())
        }
        Command::Nowcast { shared, checkpoint, history_file, at_time } => {
            cmd_nowcast(checkpoint, history_file, *at_time, shared.format.into())
        }
        Command::Ablate { shared, data, seed, seeds, out_csv } => cmd_ablate(AblateArgs {
            data,
            config: shared.config.as_deref(),
            seed: *seed,
            seeds: seeds.clone(),
            out_csv: out_csv.as_deref(),
            format: shared.format.into(),
        }),
    };
    match result {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
