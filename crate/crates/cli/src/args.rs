use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fogclear_core::dataio::SyntheticConfig;
use fogclear_core::learning::{InputVariant, Precision};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "fogclear", version, about = "Fog-of-war state estimation pipeline", args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// TOML file of flag values; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic corpus (or convert a frame log) into a shard.
    Gen(GenArgs),
    /// Train the encoder-decoder on a shard.
    TrainEd(TrainEdArgs),
    /// Train a winner classifier on one input variant.
    TrainClf(TrainClfArgs),
    /// Evaluate a classifier on the validation split.
    EvalClf(EvalClfArgs),
    /// Write noisy / clean / predicted heatmaps for one frame.
    Render(RenderArgs),
    /// Finite-difference check of the full encoder-decoder gradient.
    Gradcheck(GradcheckArgs),
    /// Compare combat-timing policies on synthetic games.
    BenchPolicies(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::TrainEd(_) => "train-ed",
            Command::TrainClf(_) => "train-clf",
            Command::EvalClf(_) => "eval-clf",
            Command::Render(_) => "render",
            Command::Gradcheck(_) => "gradcheck",
            Command::BenchPolicies(_) => "bench-policies",
        }
    }
}

pub const SUBCOMMANDS: [&str; 7] = [
    "gen",
    "train-ed",
    "train-clf",
    "eval-clf",
    "render",
    "gradcheck",
    "bench-policies",
];

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = SyntheticConfig::default().num_replays)]
    pub replays: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().frames_per_replay)]
    pub frames_per_replay: usize,
    /// Smallest final army per side.
    #[arg(long, default_value_t = SyntheticConfig::default().units_per_side.0)]
    pub units_min: usize,
    /// Largest final army per side.
    #[arg(long, default_value_t = SyntheticConfig::default().units_per_side.1)]
    pub units_max: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().bases_per_side)]
    pub bases_per_side: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().scout_probability)]
    pub scout_probability: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().skip_first_frames)]
    pub skip_first: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().skip_last_frames)]
    pub skip_last: usize,
    /// Frame index from which side A's upgrade is done.
    #[arg(long, default_value_t = SyntheticConfig::default().upgrade_frame)]
    pub upgrade_frame: usize,
}

impl SynthArgs {
    pub fn to_config(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            num_replays: self.replays,
            frames_per_replay: self.frames_per_replay,
            units_per_side: (self.units_min, self.units_max),
            bases_per_side: self.bases_per_side,
            scout_probability: self.scout_probability,
            skip_first_frames: self.skip_first,
            skip_last_frames: self.skip_last,
            upgrade_frame: self.upgrade_frame,
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Shard path; defaults to `<out-dir>/dataset.fogd`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the generated frames as a JSON-lines frame log.
    #[arg(long)]
    pub frame_log: Option<PathBuf>,
    /// Build the shard from this frame log instead of generating games.
    #[arg(long, conflicts_with = "frame_log")]
    pub from_log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Dataset shard.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    /// Seed of the replay-level split; defaults to `--seed`.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainEdArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 32)]
    pub base_filters: usize,
    #[arg(long, default_value_t = 3)]
    pub down_stages: usize,
    /// Checkpoint path; defaults to `<out-dir>/encoder_decoder.fogc`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
pub enum VariantArg {
    Noisy,
    Clean,
    Retrieved,
}

impl From<VariantArg> for InputVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Noisy => InputVariant::Noisy,
            VariantArg::Clean => InputVariant::Clean,
            VariantArg::Retrieved => InputVariant::Retrieved,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainClfArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    /// Encoder-decoder checkpoint; required for `--variant retrieved`.
    #[arg(long)]
    pub ed_checkpoint: Option<PathBuf>,
    /// Checkpoint path; defaults to `<out-dir>/classifier_<variant>.fogc`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalClfArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    #[arg(long)]
    pub clf_checkpoint: PathBuf,
    /// Encoder-decoder checkpoint; required for `--variant retrieved`.
    #[arg(long)]
    pub ed_checkpoint: Option<PathBuf>,
    /// Evaluate on every sample instead of the validation split.
    #[arg(long)]
    pub all: bool,
    /// Keep only the k-th remaining frame of each replay (0-based).
    #[arg(long)]
    pub frame_index: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
pub enum RenderMode {
    /// The full 32x32 grid.
    Raw32,
    /// 4x4 blocks summed into an 8x8 grid.
    Sum8,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sample index within the shard.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub channel: usize,
    #[arg(long, value_enum, default_value_t = RenderMode::Raw32)]
    pub mode: RenderMode,
    /// Adds the predicted panel.
    #[arg(long)]
    pub ed_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Spatial extent of the reduced input.
    #[arg(long, default_value_t = 8)]
    pub extent: usize,
    #[arg(long, default_value_t = 4)]
    pub base_filters: usize,
    #[arg(long, default_value_t = 2)]
    pub down_stages: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long)]
    pub ed_checkpoint: PathBuf,
    #[arg(long)]
    pub clf_checkpoint: PathBuf,
    #[arg(long, default_value_t = 1.5)]
    pub correction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ratio_threshold: f64,
    #[arg(long, default_value_t = 0.69)]
    pub probability_threshold: f64,
    /// Let the model policy attack before the upgrade is done.
    #[arg(long)]
    pub ignore_upgrade: bool,
    /// Seed of the synthetic games; defaults to `--seed`.
    #[arg(long)]
    pub game_seed: Option<u64>,
}
