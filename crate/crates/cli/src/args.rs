use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "metricforge", version, about = "Mahalanobis metric learning from pairwise constraints")]
pub struct Cli {
    /// Log per-iteration progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a metric and write `model.txt` and `trace.csv`.
    Train(TrainArgs),
    /// Stratified k-fold 1-NN cross-validation.
    Cv(CvArgs),
    /// Threshold sweep over labeled test pairs; writes `roc.csv`.
    Verify(VerifyArgs),
    /// Print dimension, metadata and an eigenvalue summary of a model file.
    Inspect(InspectArgs),
    /// Write a synthetic labeled dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoArg {
    Pcml,
    Ncml,
    /// Identity metric (Euclidean baseline).
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Libsvm,
}

/// Settings shared by `train` and `cv`. Unset flags fall back to the
/// `--config` file, then to built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct LearnArgs {
    /// Labeled dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    /// Slack penalty.
    #[arg(long = "C", value_name = "C")]
    pub c: Option<f64>,
    /// Relative duality-gap tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Neighbors per sample used to build the pair constraints.
    #[arg(long)]
    pub k: Option<usize>,
    /// Reduce to this many principal components before learning.
    #[arg(long)]
    pub pca: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// TOML file of `key = value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub learn: LearnArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub learn: LearnArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repeat the whole cross-validation with seeds `seed, seed+1, ...`.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Folds trained concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature file the pair indices refer to.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// CSV rows `idx_a,idx_b,matched` with 0-based indices.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = metricforge::eval::DEFAULT_THRESHOLDS)]
    pub thresholds: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub model: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Two unit-variance Gaussian classes separated along the diagonal.
    TwoGaussians,
    /// Two informative dimensions plus scaled noise dimensions.
    Anisotropic,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "two-gaussians")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Dimension of the two-Gaussian data; ignored for `anisotropic`.
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Distance between the class means (default 8 for `two-gaussians`,
    /// 4 for `anisotropic`).
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
