use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsrc_core::{ApsMode, LambdaGranularity, PrefilterKind, ResidualKind, ResidualSpread};

#[derive(Debug, Parser)]
#[command(
    name = "gsrc",
    version,
    about = "Group sparsity residual denoising for grayscale images"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add seeded white Gaussian noise to an image.
    AddNoise(AddNoiseArgs),
    /// Run the built-in block-DCT pre-filter.
    Prefilter(PrefilterArgs),
    /// Denoise an image against a guide.
    Denoise(DenoiseArgs),
    /// Print PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Histogram of first-iteration group residuals with Gaussian/Laplacian fits.
    ResidualHist(ResidualHistArgs),
    /// Run a noise-level sweep over a set of images.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinFilter {
    Dct,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AddNoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Unclamped sidecar path (default: `--out` with extension `.f64`).
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PrefilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[command(flatten)]
    pub dct: DctArgs,
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DctArgs {
    /// Block side of the DCT pre-filter.
    #[arg(long, default_value_t = 8)]
    pub dct_block: usize,
    /// Hard threshold as a multiple of sigma.
    #[arg(long, default_value_t = 2.7)]
    pub dct_threshold: f64,
}

/// Where the guide image comes from.
#[derive(Debug, Clone, Args)]
pub struct GuideArgs {
    /// Pre-filtered image to use as guide (PGM, PNG or `.f64` sidecar).
    #[arg(
        long,
        conflicts_with = "prefilter",
        required_unless_present = "prefilter"
    )]
    pub guide: Option<PathBuf>,
    /// Compute the guide with a built-in filter instead.
    #[arg(long, value_enum)]
    pub prefilter: Option<BuiltinFilter>,
    #[command(flatten)]
    pub dct: DctArgs,
    /// Parameter schedule column (default: `dct` with `--prefilter dct`, else `bm3d`).
    #[arg(long)]
    pub schedule: Option<PrefilterKind>,
}

/// Overrides for individual configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub patch_side: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// `per-row` or `per-group`.
    #[arg(long)]
    pub lambda: Option<LambdaGranularity>,
    /// `guide` or `observed`.
    #[arg(long)]
    pub spread: Option<ResidualSpread>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// `on`, `off` or `guide`.
    #[arg(long)]
    pub aps: Option<ApsMode>,
    /// Successive-estimate MSE below which iteration stops; 0 disables.
    #[arg(long)]
    pub early_stop: Option<f64>,
    #[arg(long)]
    pub ssim_window: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DenoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[command(flatten)]
    pub guide: GuideArgs,
    /// Clean image; enables metrics in the output and the log.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Per-iteration CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub ssim_window: usize,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ResidualHistArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[command(flatten)]
    pub guide: GuideArgs,
    /// `shrunk` (after thresholding) or `raw`.
    #[arg(long, default_value = "shrunk")]
    pub kind: ResidualKind,
    #[arg(long, default_value_t = 101)]
    pub bins: usize,
    /// Half-width of the histogram range (default: 5 sample deviations).
    #[arg(long)]
    pub limit: Option<f64>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Flat `key=value` file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Clean test image; repeat for several.
    #[arg(long = "image")]
    pub images: Vec<PathBuf>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `dct`, or `dir:<path>` to read guides named `<stem>_s<sigma>.{f64,pgm,png}`.
    #[arg(long)]
    pub prefilter: Option<String>,
    #[arg(long)]
    pub schedule: Option<PrefilterKind>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Run every case with adaptive search on and off.
    #[arg(long)]
    pub aps_ablation: bool,
    /// CSV report; the Markdown table goes next to it with extension `.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write each noisy input as `<stem>_s<sigma>.f64` into this directory.
    #[arg(long)]
    pub write_noisy: Option<PathBuf>,
}
