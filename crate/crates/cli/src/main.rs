//! `dereverb`: render paired dereverberation data, train the spectral gain
//! model, apply it, and score the results.

mod commands;
mod config;
mod errors;
mod progress;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dereverb_core::dataset::Split;
use dereverb_core::diffusion::ReverseMode;

use crate::commands::DereverbArgs;
use crate::config::RunConfig;
use crate::errors::{CliError, EXIT_USAGE};
use crate::progress::Progress;

#[derive(Parser)]
#[command(
    name = "dereverb",
    version,
    about = "Cold-diffusion dereverberation pipeline for stereo percussive audio"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to a TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every random draw of the run; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for file-level parallelism; 0 picks the machine's
    /// parallelism. Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Emit machine-readable progress to stderr as JSON lines.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a paired dry/wet dataset from a dry corpus and an RIR pool.
    Render {
        /// Directory of dry stereo WAV files.
        dry_dir: PathBuf,
        /// Directory of measured impulse responses; rooms are synthesized
        /// from the config ranges when omitted.
        #[arg(long, value_name = "DIR")]
        rir_dir: Option<PathBuf>,
        /// Output directory for WAVs, manifest, and reports.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the gain predictor on a rendered manifest's training split.
    Train {
        /// Path to manifest.jsonl from `render`.
        manifest: PathBuf,
        /// Reverse parameterization to train.
        #[arg(long, value_enum, default_value_t = ModeArg::Delta)]
        mode: ModeArg,
        /// Output directory for the checkpoint and loss history.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Override the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the configured batch size.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Override the configured learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Apply a trained model (or the oracle) to reverberant recordings.
    Dereverb {
        /// A stereo WAV file or a directory of them.
        input: PathBuf,
        /// Checkpoint from `train`; EMA weights are used unless
        /// --raw-weights is set.
        #[arg(long, value_name = "FILE", conflicts_with = "oracle_reference")]
        checkpoint: Option<PathBuf>,
        /// Expected reverse parameterization; errors if the checkpoint
        /// disagrees.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Use the final training weights instead of their moving average.
        #[arg(long, requires = "checkpoint")]
        raw_weights: bool,
        /// Test mode: drive the sampler with the matching clean reference
        /// (a WAV for a single input, a directory of same-named WAVs for a
        /// directory input) instead of a checkpoint.
        #[arg(long, value_name = "PATH")]
        oracle_reference: Option<PathBuf>,
        /// Output directory for the estimates.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Score estimates against a manifest's references.
    Evaluate {
        /// Path to manifest.jsonl from `render`.
        manifest: PathBuf,
        /// Directory of estimate WAVs named like the wet files.
        #[arg(long, value_name = "DIR")]
        estimates: PathBuf,
        /// Restrict scoring to one split; all entries when omitted.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Output directory for metrics.csv and metrics.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Direct,
    Delta,
}

impl From<ModeArg> for ReverseMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Direct => ReverseMode::Direct,
            ModeArg::Delta => ReverseMode::DeltaNormalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(split: SplitArg) -> Self {
        match split {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn run(cli: Cli, progress: &Progress) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Train {
        epochs,
        batch_size,
        learning_rate,
        ..
    } = &cli.command
    {
        if let Some(epochs) = epochs {
            config.train.epochs = *epochs;
        }
        if let Some(batch_size) = batch_size {
            config.train.batch_size = *batch_size;
        }
        if let Some(learning_rate) = learning_rate {
            config.train.learning_rate = *learning_rate;
        }
    }
    config.validate()?;
    let jobs = if cli.jobs == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cli.jobs
    };

    match cli.command {
        Command::Render {
            dry_dir,
            rir_dir,
            out,
        } => commands::render(&config, &dry_dir, rir_dir.as_deref(), &out, jobs, progress),
        Command::Train {
            manifest,
            mode,
            out,
            ..
        } => commands::train_command(&config, &manifest, mode.into(), &out, progress),
        Command::Dereverb {
            input,
            checkpoint,
            mode,
            raw_weights,
            oracle_reference,
            out,
        } => {
            if checkpoint.is_none() && oracle_reference.is_none() {
                return Err(CliError::Usage(
                    "either --checkpoint or --oracle-reference is required".to_string(),
                ));
            }
            commands::dereverb(
                &config,
                &DereverbArgs {
                    input: &input,
                    checkpoint: checkpoint.as_deref(),
                    oracle_reference: oracle_reference.as_deref(),
                    mode: mode.map(Into::into),
                    raw_weights,
                    out: &out,
                    jobs,
                },
                progress,
            )
        }
        Command::Evaluate {
            manifest,
            estimates,
            split,
            out,
        } => commands::evaluate(
            &config,
            &manifest,
            &estimates,
            split.map(Into::into),
            &out,
            jobs,
            progress,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let benign = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    let command_name = match &cli.command {
        Command::Render { .. } => "render",
        Command::Train { .. } => "train",
        Command::Dereverb { .. } => "dereverb",
        Command::Evaluate { .. } => "evaluate",
    };
    let progress = Progress::new(command_name, cli.json);
    match run(cli, &progress) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            progress.error(e.message(), e.exit_code());
            ExitCode::from(e.exit_code())
        }
    }
}
