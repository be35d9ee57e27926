use clap::{Parser, Subcommand};
use std::path::PathBuf;
use toneunit::cli::{self, Overrides};
use toneunit::model::QuantizerKind;

/// Tone-aware discrete speech units: corpus generation, CTC fine-tuning,
/// evaluation, and analysis.
#[derive(Parser)]
#[command(name = "toneunit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonFlags {
    /// key=value config file (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic tonal corpus (train/dev/test + manifest)
    GenCorpus {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Fine-tune a model and keep the checkpoint with the best dev PER
    Train {
        /// Directory holding train/dev/test corpus files
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Quantizer: fsq, vq, or kmeans (tone-blind baseline)
        #[arg(long)]
        quantizer: Option<QuantizerKind>,
        /// Fraction of training labels to use, in (0, 1]
        #[arg(long)]
        label_fraction: Option<f64>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Evaluate a checkpoint: PER, codebook usage, tone probe, unit table
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split to evaluate: train, dev, or test
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Emit the unit-tone table and pitch-histogram data files
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of F0 histogram bins over 80-320 Hz
        #[arg(long, default_value_t = 24)]
        bins: usize,
        /// Overwrite existing outputs
        #[arg(long)]
        force: bool,
    },
    /// Write per-utterance unit streams (raw and de-duplicated)
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split to extract: train, dev, or test
        #[arg(long, default_value = "test")]
        split: String,
        /// Overwrite existing outputs
        #[arg(long)]
        force: bool,
    },
}

fn run() -> toneunit::Result<()> {
    match Cli::parse().command {
        Command::GenCorpus { out, common } => {
            let overrides = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cli::cmd_gen_corpus(common.config.as_deref(), &out, &overrides, common.force)
        }
        Command::Train {
            corpus,
            out,
            quantizer,
            label_fraction,
            common,
        } => {
            let overrides = Overrides {
                seed: common.seed,
                quantizer,
                label_fraction,
            };
            cli::cmd_train(&corpus, common.config.as_deref(), &out, &overrides, common.force)
        }
        Command::Eval {
            checkpoint,
            corpus,
            out,
            split,
            common,
        } => {
            let overrides = Overrides {
                seed: common.seed,
                ..Overrides::default()
            };
            cli::cmd_eval(
                &checkpoint,
                &corpus,
                &out,
                &split,
                common.config.as_deref(),
                &overrides,
                common.force,
            )
        }
        Command::Analyze {
            checkpoint,
            corpus,
            out,
            bins,
            force,
        } => cli::cmd_analyze(&checkpoint, &corpus, &out, bins, force),
        Command::Extract {
            checkpoint,
            corpus,
            out,
            split,
            force,
        } => cli::cmd_extract(&checkpoint, &corpus, &out, &split, force),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
