use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laneforge::config::ConfigError;
use laneforge::eval::EvalError;
use laneforge::il::IlError;
use laneforge::nn::NnError;
use laneforge::render::RenderError;
use laneforge::sim::SimError;
use thiserror::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "laneforge", version, about = "Lane-following imitation learning pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration; omitted keys take the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in budget preset the config file is layered over.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact this run writes.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum)]
    domain_rand: Option<Switch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record expert demonstrations into a dataset directory.
    Collect {
        #[arg(long)]
        episodes: Option<i64>,
        #[arg(long)]
        steps: Option<i64>,
        /// Dataset directory (default: <out-dir>/dataset).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Behavior cloning on a collected dataset.
    TrainBc(TrainArgs),
    /// DAgger rounds starting from behavior cloning on the dataset.
    TrainDagger(TrainArgs),
    /// Adversarial fine-tuning against the dataset's expert pairs.
    TrainGail(TrainArgs),
    /// Roll out a policy and write an EvalSummary JSON.
    Eval {
        /// `expert`, `constant:THROTTLE,STEERING`, or a weight file.
        #[arg(long, default_value = "expert")]
        policy: String,
        #[arg(long)]
        episodes: Option<i64>,
        /// Comma-separated episode seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Evaluate on the holdout maps.
        #[arg(long)]
        holdout: bool,
        /// Output JSON (default: <out-dir>/eval.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-episode CSV traces.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render the camera view from one pose to a binary PPM.
    RenderPreview {
        #[arg(long)]
        map: String,
        /// Pose as x,y,theta (meters, meters, radians).
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (default: <out-dir>/dataset).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Policy weights to start from instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Weight file to write (default: <out-dir>/<method>.lfw).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("ConfigError: {0}")]
    Config(#[from] ConfigError),
    #[error("ConfigError: {0}")]
    Usage(String),
    #[error("SimError: {0}")]
    Sim(#[from] SimError),
    #[error("IlError: {0}")]
    Il(#[from] IlError),
    #[error("NnError: {0}")]
    Nn(#[from] NnError),
    #[error("EvalError: {0}")]
    Eval(#[from] EvalError),
    #[error("RenderError: {0}")]
    Render(#[from] RenderError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("laneforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
