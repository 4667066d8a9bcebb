//! `corefrl`: prepare corpora, train, evaluate, predict, generate synthetic data and
//! run the detection-loss ablation.
//!
//! Exit codes: 0 on success, 1 on internal errors, 2 on bad input or usage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use corefrl::corpus::SynthConfig;
use corefrl::CorefError;

use commands::{EvalSource, SynthArgs};

#[derive(Parser)]
#[command(name = "corefrl", version, about = "Actor-critic coreference resolution")]
struct Cli {
    /// Worker threads for evaluation and prediction (0: one per core).
    #[arg(long, global = true, env = "COREFRL_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CoNLL-2012 (or JSON lines) corpus to canonical JSON lines.
    Prepare {
        input: PathBuf,
        output: PathBuf,
        /// Also write hash embeddings of this dimension for the corpus.
        #[arg(long, requires = "embeddings_out")]
        hash_dim: Option<usize>,
        #[arg(long, requires = "hash_dim")]
        embeddings_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a run configuration file.
    Train {
        config: PathBuf,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Trains without the mention-detection loss.
        #[arg(long)]
        no_detection_loss: bool,
    },
    /// Score predicted clusters against a gold corpus.
    Eval(EvalArgs),
    /// Decode a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic corpus, its embeddings and a run configuration.
    GenSynth(GenSynthArgs),
    /// Train with and without the detection loss for each seed.
    Ablate {
        config: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint to decode with.
    #[arg(long, required_unless_present_any = ["predictions", "gold_as_prediction"], requires = "embeddings")]
    model: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Score a `predict` output file instead of running a model.
    #[arg(long, conflicts_with_all = ["model", "gold_as_prediction"])]
    predictions: Option<PathBuf>,
    /// Score the gold clusters against themselves (every F1 is 1).
    #[arg(long, conflicts_with = "model")]
    gold_as_prediction: bool,
    /// Add mention-detection recall by span width (model mode only).
    #[arg(long, requires = "model")]
    by_width: bool,
    /// Also write the report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().num_docs)]
    num_docs: usize,
    #[arg(long, default_value_t = SynthConfig::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = SynthConfig::default().entities_per_doc)]
    entities: usize,
    #[arg(long, default_value_t = SynthConfig::default().mentions_per_entity)]
    mentions: usize,
    #[arg(long, default_value_t = SynthConfig::default().pronoun_rate)]
    pronoun_rate: f64,
    #[arg(long, default_value_t = SynthConfig::default().max_name_width)]
    max_name_width: usize,
    /// Weight ratio between names of width w+1 and w (1: uniform widths).
    #[arg(long, default_value_t = SynthConfig::default().name_width_decay)]
    name_width_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    hash_dim: usize,
    /// Fraction of documents held out as the development set.
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
}

fn run(cli: Cli) -> corefrl::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CorefError::Invalid(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Prepare { input, output, hash_dim, embeddings_out, seed } => {
            commands::prepare(&input, &output, hash_dim, embeddings_out.as_deref(), seed)
        }
        Command::Train { config, seed, no_detection_loss } => commands::train_cmd(&config, seed, no_detection_loss),
        Command::Eval(a) => {
            let source = match (&a.model, &a.predictions) {
                (Some(checkpoint), _) => EvalSource::Model {
                    checkpoint,
                    embeddings: a.embeddings.as_deref().expect("clap enforces --embeddings"),
                    by_width: a.by_width,
                },
                (None, Some(p)) => EvalSource::Predictions(p),
                (None, None) => EvalSource::Gold,
            };
            commands::eval(&a.corpus, source, a.output.as_deref())
        }
        Command::Predict { model, corpus, embeddings, output } => {
            commands::predict(&model, &corpus, &embeddings, &output)
        }
        Command::GenSynth(a) => {
            let synth = SynthConfig {
                vocab_size: a.vocab_size,
                num_docs: a.num_docs,
                entities_per_doc: a.entities,
                mentions_per_entity: a.mentions,
                pronoun_rate: a.pronoun_rate,
                seed: a.seed,
                max_name_width: a.max_name_width,
                name_width_decay: a.name_width_decay,
            };
            let args = SynthArgs { synth, hash_dim: a.hash_dim, dev_fraction: a.dev_fraction };
            commands::gen_synth(&args, &a.output_dir)
        }
        Command::Ablate { config, seeds } => commands::ablate(&config, &seeds),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
