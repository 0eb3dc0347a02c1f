use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dlsec::bounds::ShareChoice;
use dlsec::fading::FadingDistribution;
use dlsec::numerics::DEFAULT_NODES;
use dlsec::policy::PolicyFamily;
use dlsec::protocol::{InitMode, Scheme, DEFAULT_BACKOFF, DEFAULT_N1};
use dlsec::rates::KeyShare;

#[derive(Debug, Parser)]
#[command(
    name = "dlsec",
    version,
    about = "Delay-limited secrecy rate bounds for block-fading wiretap channels",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print all bounds at one average power as JSON
    Bounds(BoundsArgs),
    /// Evaluate the bounds over an SNR grid and print CSV
    Sweep(SweepArgs),
    /// Run the key-renewal simulator
    Simulate(SimulateArgs),
    /// Cross-check quadrature against Monte Carlo
    Validate(ValidateArgs),
}

/// `-inf` (zero power) is accepted.
pub fn parse_db(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_nan() || v == f64::INFINITY {
        return Err(format!("`{s}` is not a usable power level"));
    }
    Ok(v)
}

pub fn parse_share(s: &str) -> Result<ShareChoice, String> {
    if s.trim().eq_ignore_ascii_case("search") {
        return Ok(ShareChoice::Search);
    }
    let floor: f64 = s.trim().parse().map_err(|_| format!("`{s}` is neither `search` nor a number"))?;
    KeyShare::new(floor).map(ShareChoice::Fixed).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Main-channel gain law (chisq:k[:scale], gamma:k:theta, exp:mean, const:v)
    #[arg(long, default_value = "chisq:4")]
    pub dist_m: FadingDistribution,
    /// Eavesdropper gain law
    #[arg(long, default_value = "chisq:4")]
    pub dist_e: FadingDistribution,
    /// Restrict to one power-control family (const, full-inv, main-inv, trunc-inv[:h_min])
    #[arg(long)]
    pub policy: Option<PolicyFamily>,
    /// Gauss-Legendre nodes per integration piece
    #[arg(long, default_value_t = DEFAULT_NODES)]
    pub nodes: usize,
    /// Also report rates in bits per channel use
    #[arg(long)]
    pub bits: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Optional `key = value` file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Average power in dB (unit noise); `-inf` means zero power
    #[arg(long, default_value = "20", value_parser = parse_db, allow_hyphen_values = true)]
    pub pbar_db: f64,
    /// Key share: `search`, or a floor value for q(h) = max(h_e, floor)
    #[arg(long, default_value = "search", value_parser = parse_share)]
    pub share: ShareChoice,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Explicit comma-separated SNR grid in dB (overrides --from/--to/--step)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, default_value_t = 40.0, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 2.0)]
    pub step: f64,
    #[arg(long, default_value = "search", value_parser = parse_share)]
    pub share: ShareChoice,
    /// Write the CSV here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "full")]
    pub scheme: Scheme,
    /// Blocks per super-block
    #[arg(short = 'a', long = "blocks", default_value_t = 100)]
    pub blocks: usize,
    /// Number of super-blocks
    #[arg(short = 'b', long = "superblocks", default_value_t = 10)]
    pub superblocks: usize,
    /// Symbols per block
    #[arg(long, default_value_t = DEFAULT_N1)]
    pub n1: u64,
    #[arg(long, default_value = "20", value_parser = parse_db, allow_hyphen_values = true)]
    pub pbar_db: f64,
    /// Rate backoff applied to the pad-lane schedule
    #[arg(long, default_value_t = DEFAULT_BACKOFF)]
    pub backoff: f64,
    /// First super-block handling: insecure or dedicated
    #[arg(long, default_value = "insecure")]
    pub init: InitMode,
    /// Key-share floor for the full-CSI scheme
    #[arg(long, default_value_t = 0.0)]
    pub share_floor: f64,
    #[arg(long, env = "DST_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Output prefix; writes <prefix>.json and <prefix>.csv
    #[arg(long, default_value = "dlsec-sim")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Small suite, finishes in a few seconds
    #[arg(long)]
    pub quick: bool,
    /// Monte Carlo samples per check
    #[arg(long)]
    pub samples: Option<usize>,
    /// Allowed disagreement in Monte Carlo standard errors
    #[arg(long, default_value_t = 5.0)]
    pub sigmas: f64,
    #[arg(long, default_value_t = DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, env = "DST_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Test hook: replaces the tolerance (in standard errors, no absolute slack)
    #[arg(long, hide = true)]
    pub inject_tolerance: Option<f64>,
}
