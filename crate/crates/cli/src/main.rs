mod commands;
mod context;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use context::Ctx;

#[derive(Debug, Parser)]
#[command(name = "coach", version, about = "Negotiation coaching: train, evaluate and serve", arg_required_else_help = true)]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Raw,
    Normalized,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and filter corpus files into corpus.jsonl.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "normalized")]
        format: Format,
    },
    /// Split the corpus and assign success labels.
    Label,
    /// Run the tactic detector over the corpus.
    Annotate,
    /// Train detectors, predictor, outcome model or n-gram baseline.
    #[command(subcommand)]
    Train(Train),
    /// Fit predictor decision thresholds on the dev split.
    Calibrate,
    /// Evaluate the predictor or the outcome model on the test split.
    #[command(subcommand)]
    Eval(Eval),
    /// Seller outcome weights per tactic.
    Weights {
        #[arg(long, default_value_t = 23)]
        top: usize,
    },
    /// Evaluate exported session transcripts.
    Metrics {
        #[arg(long)]
        coached: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Coach the seller's next move for a transcript prefix.
    Suggest {
        #[arg(long)]
        transcript: PathBuf,
        /// Use the bundled demo models instead of trained artifacts.
        #[arg(long)]
        demo: bool,
    },
    /// Run the chat service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        demo: bool,
    },
}

#[derive(Debug, Subcommand)]
enum Train {
    /// Learned tactic classifiers from hand-labelled turns.
    Detectors {
        #[arg(long)]
        turns: PathBuf,
    },
    /// Next-tactic predictor.
    Predictor,
    /// Outcome classifier and exemplar index.
    Outcome,
    /// N-gram outcome baseline.
    Baseline,
}

#[derive(Debug, Subcommand)]
enum Eval {
    /// Micro and macro F1 on the test split.
    Predictor {
        /// Retrain with turn only, turn + product and the full model.
        #[arg(long)]
        ablate: bool,
    },
    /// Outcome accuracy on the test split.
    Outcome {
        /// Retrain with each feature group removed.
        #[arg(long)]
        ablate: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx::new(cli.config.as_deref(), cli.seed, cli.out)?;
    match cli.command {
        Command::Ingest { inputs, format } => {
            let format = match format {
                Format::Raw => coach_core::corpus::CorpusFormat::Raw,
                Format::Normalized => coach_core::corpus::CorpusFormat::Normalized,
            };
            commands::ingest(&ctx, &inputs, format)
        }
        Command::Label => commands::label(&ctx),
        Command::Annotate => commands::annotate(&ctx),
        Command::Train(Train::Detectors { turns }) => commands::train_detectors(&ctx, &turns),
        Command::Train(Train::Predictor) => commands::train_predictor(&ctx),
        Command::Train(Train::Outcome) => commands::train_outcome(&ctx),
        Command::Train(Train::Baseline) => commands::train_baseline(&ctx),
        Command::Calibrate => commands::calibrate(&ctx),
        Command::Eval(Eval::Predictor { ablate }) => commands::eval_predictor(&ctx, ablate),
        Command::Eval(Eval::Outcome { ablate }) => commands::eval_outcome(&ctx, ablate),
        Command::Weights { top } => commands::weights(&ctx, top),
        Command::Metrics { coached, baseline } => commands::metrics(&ctx, &coached, baseline.as_deref()),
        Command::Suggest { transcript, demo } => commands::suggest(&ctx, &transcript, demo),
        Command::Serve { host, port, demo } => commands::serve(ctx, host, port, demo),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
