use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "irlplan", version, about = "Behavior planning with conditional prediction and IRL-learned costs")]
pub struct Cli {
    /// TOML file with the same keys as the flags; flags given on the command
    /// line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario file.
    Synthesize(SynthArgs),
    /// Train the conditional motion predictor.
    TrainCmp(TrainCmpArgs),
    /// Learn cost weights from demonstrations.
    TrainIrl(TrainIrlArgs),
    /// Score the planner on a scenario file.
    Evaluate(EvaluateArgs),
    /// Render one scenario as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Ctrv,
    Idm,
    Learned,
    /// Logged futures of the other agents.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Early,
    Late,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// car_follow, cut_in, lane_change, intersection_yield, curved_road or mixed
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCmpArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameter file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss history CSV; defaults to the output path with a `.loss.csv` suffix.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictorArgs {
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorKind>,
    /// Parameter file for the learned predictor.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Batched inference over all proposals of a scene (default).
    #[arg(long, overrides_with = "single")]
    pub batch: bool,
    /// One inference call per proposal.
    #[arg(long, overrides_with = "batch")]
    pub single: bool,
}

#[derive(Debug, Args)]
pub struct TrainIrlArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weights file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV report to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record to draw.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Weights used to rank and color the proposals.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub no_proposals: bool,
    #[arg(long)]
    pub no_futures: bool,
}
