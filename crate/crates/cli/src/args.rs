//! Command-line surface: one parser struct per subcommand, plus the global
//! flags shared by all of them. Flags override config-file values; the
//! merge itself lives in [`crate::commands`].

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "uxnet",
    version,
    about = "3D UX-Net volumetric segmentation: synthesis, training, inference, cost analysis"
)]
pub struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override the run seed from the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Deterministic logs: omit wall-clock fields so runs compare bitwise.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Print the merged configuration as JSON and exit without running.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic segmentation dataset with a manifest.
    Synth {
        /// Dataset directory to create.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of image/label pairs.
        #[arg(long, value_name = "N")]
        volumes: Option<usize>,
        /// Cubic volume extent per case.
        #[arg(long, value_name = "N")]
        extent: Option<usize>,
        /// Label classes including background.
        #[arg(long, value_name = "N")]
        classes: Option<usize>,
    },

    /// Train a model; writes checkpoints and a JSONL metrics log.
    Train {
        /// Dataset directory (must contain manifest.json).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Run directory for checkpoints and metrics.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Continue from this checkpoint up to the configured step count.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
        /// Override the total step count from the config.
        #[arg(long, value_name = "N")]
        steps: Option<usize>,
    },

    /// Evaluate a checkpoint on a dataset split; prints Dice as JSON.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Dataset directory (must contain manifest.json).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Dataset split: train, val, or test.
        #[arg(long, default_value = "val")]
        split: String,
    },

    /// Predict a label volume for one image (raw codec or NIfTI input).
    Infer {
        /// Checkpoint to predict with.
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        /// Input image: .uxv (raw codec) or .nii.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Output label volume (.uxv plus JSON sidecar).
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
    },

    /// Print parameter / FLOP / receptive-field tables.
    Analyze {
        /// Comma-separated kernel sizes sweeping the configured model
        /// (stem kernel pinned at 7), e.g. 3,5,7,9,11,13.
        #[arg(long, value_name = "K,K,...")]
        sweep_kernel: Option<String>,
        /// Named preset instead of the configured model:
        /// default, optimized, or tiny.
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
        /// Output format: markdown, csv, or json.
        #[arg(long, default_value = "markdown")]
        format: String,
    },

    /// Finite-difference gradient checks in float64.
    Gradcheck {
        /// `all`, or an op-name prefix such as `conv3d` or `gelu`.
        #[arg(default_value = "all")]
        scope: String,
        /// Also run the deliberately mis-scaled backward rule; it must be
        /// reported as a failure, so the command exits nonzero.
        #[arg(long)]
        negative_control: bool,
    },
}
