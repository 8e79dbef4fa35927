mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use commands::eval::ClsTask;
use config::RunConfig;
use egonce_core::egonce::AnchorSet;
use egonce_core::trainer::Objective;
use error::{CliResult, EXIT_OK};
use output::{ensure_dir, Output};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "egonce", version, about = "Tag, pair, train and evaluate egocentric video-text models")]
struct Cli {
    /// Seed for every random choice of the run; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Suppress progress and report echo on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ObjectiveArg {
    Egonce,
    Infonce,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AnchorArg {
    Augmented,
    Batch,
}

#[derive(Subcommand)]
enum Command {
    /// Tag narrations with taxonomy nouns and verbs.
    Tag {
        #[arg(long)]
        narrations: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        /// Defaults to <out-dir>/tagged.jsonl.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Turn tagged narrations into clip-text pairs.
    Pair {
        #[arg(long)]
        tagged: PathBuf,
        /// JSON object mapping video ids to durations in seconds.
        #[arg(long)]
        durations: Option<PathBuf>,
        #[arg(long)]
        window_sec: Option<f64>,
        /// Defaults to <out-dir>/pairs.jsonl.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train projection heads; uses the synthetic corpus unless feature files are given.
    Train {
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        embed_dim: Option<usize>,
        #[arg(long)]
        max_gap_sec: Option<f64>,
        #[arg(long, value_enum)]
        anchors: Option<AnchorArg>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        video_features: Option<PathBuf>,
        #[arg(long)]
        text_features: Option<PathBuf>,
        /// Also write the synthetic corpus under <out-dir>/corpus.
        #[arg(long)]
        export_corpus: bool,
    },
    /// Multiple-choice retrieval accuracy from a question file.
    EvalMcq {
        #[arg(long)]
        questions: PathBuf,
    },
    /// Recall@k and mAP at IoU thresholds for temporal localisation.
    EvalLoc {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5])]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.3f64, 0.5])]
        iou: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1f64, 0.3, 0.5])]
        map_iou: Vec<f64>,
    },
    /// State-change accuracy or keyframe localisation error.
    EvalCls {
        #[arg(long, value_enum)]
        task: ClsTask,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Frame rate used to convert PNR frame offsets to seconds.
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
    },
    /// Finite-difference checks of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
    /// Merge JSON reports into <out-dir>/report.json.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.resolve_seed(cli.seed);
    ensure_dir(&cli.out_dir)?;
    let out = Output { dir: cli.out_dir, quiet: cli.quiet };
    match cli.command {
        Command::Tag { narrations, taxonomy, output } => {
            commands::corpus::tag(&commands::corpus::TagArgs { narrations, taxonomy, output }, &out)
        }
        Command::Pair { tagged, durations, window_sec, output } => commands::corpus::pair(
            &commands::corpus::PairArgs { tagged, durations, window_sec, output },
            &cfg,
            &out,
        ),
        Command::Train {
            objective,
            epochs,
            lr,
            batch_size,
            tau,
            embed_dim,
            max_gap_sec,
            anchors,
            pairs,
            video_features,
            text_features,
            export_corpus,
        } => {
            let t = &mut cfg.train;
            if let Some(o) = objective {
                t.objective = match o {
                    ObjectiveArg::Egonce => Objective::Egonce,
                    ObjectiveArg::Infonce => Objective::Infonce,
                };
            }
            if let Some(a) = anchors {
                t.anchors = match a {
                    AnchorArg::Augmented => AnchorSet::Augmented,
                    AnchorArg::Batch => AnchorSet::Batch,
                };
            }
            t.epochs = epochs.unwrap_or(t.epochs);
            t.optimizer.lr = lr.unwrap_or(t.optimizer.lr);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.tau = tau.unwrap_or(t.tau);
            t.embed_dim = embed_dim.unwrap_or(t.embed_dim);
            t.max_gap_sec = max_gap_sec.unwrap_or(t.max_gap_sec);
            let args = commands::train::TrainArgs { pairs, video_features, text_features, export_corpus };
            commands::train::run(&args, &cfg, &out)
        }
        Command::EvalMcq { questions } => commands::eval::mcq(&questions, &out),
        Command::EvalLoc { predictions, ground_truth, ks, iou, map_iou } => commands::eval::loc(
            &commands::eval::LocArgs { predictions, ground_truth, ks, iou, map_iou },
            &out,
        ),
        Command::EvalCls { task, predictions, ground_truth, fps } => {
            commands::eval::cls(&commands::eval::ClsArgs { task, predictions, ground_truth, fps }, &out)
        }
        Command::Gradcheck { trials, inject_bug } => {
            commands::gradcheck::run(&commands::gradcheck::GradcheckArgs { trials, inject_bug }, cfg.seed, &out)
        }
        Command::Report { inputs } => commands::report::run(&inputs, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
