use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robusteval::cli::{
    cmd_correlate, cmd_eval_challenge, cmd_score, cmd_tags, cmd_train, cmd_tune_ensemble,
    CorrelateOpts, EvalChallengeOpts, MetricKind, ScoreOpts, TagsOpts, TrainOpts,
    TuneEnsembleOpts,
};
use robusteval::ensemble::DEFAULT_GRID_RESOLUTION;
use robusteval::fusion::Variant;
use robusteval::text::{TokenizerConfig, TokenizerScheme};

/// Robust MT evaluation: lexical metrics, OK/BAD tags, ensembling, a fusion
/// regressor and a challenge-set harness.
#[derive(Parser)]
#[command(name = "robusteval", version)]
struct Args {
    /// Seed for all randomness (training, initialization, dropout).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Tokenizer scheme: `rule` or `char`.
    #[arg(long, global = true, default_value_t = TokenizerScheme::Rule)]
    tokenizer: TokenizerScheme,

    /// Lowercase text before tokenization.
    #[arg(long, global = true)]
    lowercase: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score segments (TSV or JSONL) with a subset of the metrics.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Comma-separated subset of bleu,chrf,fusion,ensemble.
        #[arg(long, value_delimiter = ',', required = true)]
        metrics: Vec<MetricKind>,
        /// Trained fusion model (required for fusion and ensemble).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Ensemble normalizer + weights document.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Alias location for the same ensemble document.
        #[arg(long)]
        normalizer: Option<PathBuf>,
        /// Display bleu and chrf multiplied by 100.
        #[arg(long)]
        x100: bool,
    },
    /// Emit per-segment OK/BAD tag strings from the Levenshtein alignment.
    Tags {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Grid-search ensemble weights on a development set with gold scores.
    TuneEnsemble {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Trained fusion model providing the neural member scores.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
        resolution: usize,
    },
    /// Train the fusion regressor on segments with gold scores.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// One of baseline, sl-features, wl-tags.
        #[arg(long, default_value = "baseline")]
        variant: Variant,
        /// Override the default number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the default embedding width.
        #[arg(long)]
        embed_dim: Option<usize>,
    },
    /// Evaluate a metric on a challenge set (JSONL) and write the report.
    EvalChallenge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write a flat TSV export of the report.
        #[arg(long)]
        tsv: Option<PathBuf>,
        /// The metric to evaluate: bleu, chrf, fusion or ensemble.
        #[arg(long)]
        metrics: MetricKind,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        normalizer: Option<PathBuf>,
    },
    /// Correlate predicted scores with gold judgments.
    Correlate {
        /// Predicted scores, one per line (or trailing TSV column).
        #[arg(long)]
        scores: PathBuf,
        /// Gold judgments, same layout and length.
        #[arg(long)]
        gold: PathBuf,
        /// Second predictor for Williams' significance test.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("ROBUSTEVAL_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run(args: Args) -> Result<String, robusteval::cli::CliError> {
    let tokenizer = TokenizerConfig {
        scheme: args.tokenizer,
        lowercase: args.lowercase,
        ..TokenizerConfig::default()
    };
    match args.command {
        Command::Score {
            input,
            output,
            metrics,
            model,
            weights,
            normalizer,
            x100,
        } => cmd_score(&ScoreOpts {
            input,
            output,
            metrics,
            model,
            weights,
            normalizer,
            tokenizer,
            seed: args.seed,
            x100,
        }),
        Command::Tags { input, output } => cmd_tags(&TagsOpts {
            input,
            output,
            tokenizer,
        }),
        Command::TuneEnsemble {
            input,
            output,
            model,
            resolution,
        } => cmd_tune_ensemble(&TuneEnsembleOpts {
            input,
            output,
            model,
            resolution,
            tokenizer,
            seed: args.seed,
        }),
        Command::Train {
            input,
            output,
            variant,
            epochs,
            embed_dim,
        } => cmd_train(&TrainOpts {
            input,
            output,
            variant,
            tokenizer,
            seed: args.seed,
            epochs,
            embed_dim,
        }),
        Command::EvalChallenge {
            input,
            output,
            tsv,
            metrics,
            model,
            weights,
            normalizer,
        } => cmd_eval_challenge(&EvalChallengeOpts {
            input,
            output,
            tsv,
            metric: metrics,
            model,
            weights,
            normalizer,
            tokenizer,
            seed: args.seed,
        }),
        Command::Correlate {
            scores,
            gold,
            baseline,
            output,
        } => cmd_correlate(&CorrelateOpts {
            scores,
            gold,
            baseline,
            output,
            seed: args.seed,
        }),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    configure_threads();
    let wrote_file = matches!(
        &args.command,
        Command::Score { output: Some(_), .. }
            | Command::Tags { output: Some(_), .. }
            | Command::TuneEnsemble { output: Some(_), .. }
            | Command::Train { output: Some(_), .. }
            | Command::EvalChallenge { output: Some(_), .. }
            | Command::Correlate { output: Some(_), .. }
    );
    match run(args) {
        Ok(rendered) => {
            if !wrote_file {
                print!("{rendered}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let line = serde_json::json!({ "error": err.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
