use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

const MODEL_KINDS: [&str; 6] = [
    "single-random",
    "single-binary",
    "single-multiclass",
    "cascade-random",
    "cascade-regression",
    "cascade-binary",
];

/// Cascaded real-time highlight detection for esports video.
#[derive(Debug, Parser)]
#[command(name = "highlight", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus
    Synth(SynthArgs),
    /// Train the scene gate and the four highlight heads on a corpus
    Train(TrainArgs),
    /// Run one model over a video and write its timeline
    Predict(PredictArgs),
    /// Evaluate one model kind on a corpus split
    Eval(EvalArgs),
    /// Train and evaluate all six model kinds
    Bench(BenchArgs),
    /// Cronbach's alpha and the best-agreeing annotator subset
    Alpha(AlphaArgs),
    /// Per-frame consensus scores and labels from crowd levels
    Aggregate(AggregateArgs),
    /// Run one machine-in-the-loop annotation round on a store
    Round(RoundArgs),
    /// Serve the annotation store over HTTP
    Serve(ServeArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Worker threads [default: available cores, at most 8]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus root to create
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub videos: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Palette and class-balance preset
    #[arg(long, default_value = "hots", value_parser = ["hots", "lol", "dota2"])]
    pub style: String,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 1800)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 3600)]
    pub max_frames: usize,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Training frames are every Nth frame of each train video
    #[arg(long, default_value_t = 10)]
    pub train_stride: usize,
    /// Square network input size in pixels
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model directory to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Classify every Nth frame
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    /// Highlight decision threshold on the score
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Seed for the random-score kinds
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `train`
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Video bundle directory, or `-` for a raw frame stream on stdin
    #[arg(long)]
    pub video: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Model kind
    #[arg(long, default_value = "cascade-binary", value_parser = MODEL_KINDS)]
    pub model: String,
    /// Release frames at the source rate and drop when behind
    #[arg(long)]
    pub realtime: bool,
    /// Shortest reported segment, in frames
    #[arg(long, default_value_t = 15)]
    pub min_segment: usize,
    /// Merge segments separated by at most this many frames
    #[arg(long, default_value_t = 10)]
    pub merge_gap: usize,
    #[command(flatten)]
    pub stream: StreamArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model kind
    #[arg(long, value_parser = MODEL_KINDS)]
    pub model: String,
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for report.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Split to evaluate
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    #[command(flatten)]
    pub stream: StreamArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Existing corpus; without it a corpus is synthesized under OUT/corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Videos to synthesize without --corpus
    #[arg(long, default_value_t = 10)]
    pub videos: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub stream: StreamArgs,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// highlight_levels.csv
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub video_id: String,
    /// scene_labels.csv; restricts the matrix to game-play frames
    #[arg(long)]
    pub scene_labels: Option<PathBuf>,
    /// Size of the best-agreeing subset
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Also write alpha.json here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// highlight_levels.csv
    #[arg(long)]
    pub labels: PathBuf,
    /// scene_labels.csv
    #[arg(long)]
    pub scene_labels: PathBuf,
    /// Output directory for consensus.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Store root (a corpus directory)
    #[arg(long, env = "HF_STORE")]
    pub store: PathBuf,
    /// Frame stride for round training and pre-annotation
    #[arg(long, default_value_t = 10)]
    pub round_stride: usize,
    /// Scene model input size for rounds
    #[arg(long, default_value_t = 32)]
    pub round_input_size: usize,
    /// Training epochs per round
    #[arg(long, default_value_t = 6)]
    pub round_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Debug, Args)]
pub struct RoundArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Correct pending videos from ground-truth scene labels first
    #[arg(long)]
    pub simulate: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Binary highlight head used to score pre-annotations
    #[arg(long)]
    pub highlight_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per case
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input size of the end-to-end network case
    #[arg(long, default_value_t = 8)]
    pub input_size: usize,
}

/// Usage errors exit 1; runtime errors exit 2.
fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
