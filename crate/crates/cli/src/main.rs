mod commands;
mod error;
mod overrides;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Speech-driven 3D facial motion with a guided diffusion model.
#[derive(Debug, Parser)]
#[command(name = "facediff", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file layered over the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set network.latent_channels=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for facediff::data::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProcessArg {
    Renoise,
    Posterior,
}

impl From<ProcessArg> for facediff::diffusion::ReverseProcess {
    fn from(p: ProcessArg) -> Self {
        match p {
            ProcessArg::Renoise => Self::Renoise,
            ProcessArg::Posterior => Self::Posterior,
        }
    }
}

/// Model input shared by `sample` and `edit`.
#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Speech feature file (any rate; resampled to the model frame rate).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Identity whose style vector to use.
    #[arg(long)]
    pub style: Option<u32>,
    /// Classifier-free guidance scale [default: 0.5].
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Number of seeded variants to draw [default: 1].
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Ignore speech and style entirely.
    #[arg(long)]
    pub unconditional: bool,
    /// Output length; required without a feature file.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Reverse transition [default: renoise].
    #[arg(long, value_enum)]
    pub process: Option<ProcessArg>,
}

/// Clip subsetting for the sampling-heavy evaluations.
#[derive(Debug, Args)]
pub struct Subset {
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Evaluate at most this many clips, spread evenly over the split.
    #[arg(long)]
    pub max_clips: Option<usize>,
    /// Truncate every clip to its first frames.
    #[arg(long)]
    pub max_frames: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic speech/motion dataset.
    SynthData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a denoiser on a dataset's training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        iterations: Option<u64>,
        /// Continue from this checkpoint (its optimizer state must sit next to it).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Adapt a trained model to one identity.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        identity: u32,
        /// Use only the identity's first N sequences.
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Draw motion for a speech feature file.
    Sample(SampleArgs),
    /// Sample with frames pinned to keyframes.
    Edit {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        keyframes: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory mirroring the dataset layout: `<stem>.mseq` or `<stem>/*.mseq`.
        #[arg(long, conflicts_with = "ckpt")]
        pred: Option<PathBuf>,
        /// Generate predictions with this checkpoint instead.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Predictions per clip in checkpoint mode [default: 1].
        #[arg(long)]
        n_samples: Option<usize>,
        /// Guidance in checkpoint mode [default: 0.5].
        #[arg(long)]
        guidance: Option<f64>,
        /// Multiply reported metrics by this factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[command(flatten)]
        subset: Subset,
    },
    /// Lip-Sync and diversity over guidance scales 0.0 to 1.0.
    SweepGuidance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint; with several, the best on the validation split is swept.
        #[arg(long, required = true)]
        ckpt: Vec<PathBuf>,
        /// Samples per clip and scale [default: 8].
        #[arg(long)]
        n_samples: Option<usize>,
        /// Guidance used to rank several checkpoints [default: 0.99].
        #[arg(long)]
        select_guidance: Option<f64>,
        #[command(flatten)]
        subset: Subset,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
