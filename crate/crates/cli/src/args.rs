use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ldp_calibrate::calibrate::{FamilyTag, FitMethod};
use ldp_calibrate::eval::Variant;
use ldp_calibrate::protocols::ProtocolKind;

#[derive(Debug, Parser)]
#[command(
    name = "ldp-calibrate",
    version,
    about = "Simulate, fit, calibrate and evaluate LDP frequency estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Perturb a population, aggregate the reports, write truth and estimates.
    Simulate(SimulateArgs),
    /// Aggregate a report file into an estimates table.
    Aggregate(AggregateArgs),
    /// Fit a prior to an estimates table.
    Fit(FitArgs),
    /// Replace estimates by their posterior means under a fitted model.
    Calibrate(CalibrateArgs),
    /// Score tables against the truth.
    Evaluate(EvaluateArgs),
    /// Multi-trial experiment over an epsilon list.
    Sweep(SweepArgs),
}

/// `d=..,alpha=..[,n=..][,kmax=..]`
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticArg {
    pub d: usize,
    pub n: Option<u64>,
    pub alpha: f64,
    pub k_max: Option<u64>,
    pub text: String,
}

pub fn parse_synthetic(s: &str) -> Result<SyntheticArg, String> {
    let (mut d, mut n, mut alpha, mut k_max) = (None, None, None, None);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let bad = || format!("bad value for `{key}`: `{value}`");
        match key.trim() {
            "d" => d = Some(value.trim().parse().map_err(|_| bad())?),
            "n" => n = Some(value.trim().parse().map_err(|_| bad())?),
            "alpha" => alpha = Some(value.trim().parse().map_err(|_| bad())?),
            "kmax" | "k_max" => k_max = Some(value.trim().parse().map_err(|_| bad())?),
            other => {
                return Err(format!(
                    "unknown synthetic key `{other}` (expected d, n, alpha, kmax)"
                ))
            }
        }
    }
    Ok(SyntheticArg {
        d: d.ok_or("synthetic spec needs d")?,
        n,
        alpha: alpha.ok_or("synthetic spec needs alpha")?,
        k_max,
        text: s.to_string(),
    })
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Synthetic power-law population, e.g. `d=1000,n=100000,alpha=2`.
    #[arg(long, value_parser = parse_synthetic, conflicts_with = "dataset", required_unless_present = "dataset")]
    pub synthetic: Option<SyntheticArg>,
    /// Transaction file (`.dat`, optionally gzip-compressed).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Treat each transaction as one user's item set (padding-and-sampling).
    #[arg(long, requires = "dataset")]
    pub itemset: bool,
    /// Set-size percentile that fixes the pad length in item-set mode.
    #[arg(long, default_value_t = 0.9)]
    pub percentile: f64,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "LDP_CALIBRATE_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "oue")]
    pub protocol: ProtocolKind,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the perturbed reports of every trial.
    #[arg(long)]
    pub reports: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Report file written by `simulate --reports`.
    #[arg(long)]
    pub reports: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Estimates table.
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long, default_value = "power-law")]
    pub family: FamilyTag,
    #[arg(long, default_value = "mv")]
    pub method: FitMethod,
    /// Largest frequency of the power-law support (default: n).
    #[arg(long)]
    pub kmax: Option<u64>,
    /// Noise variance to fit against instead of the one implied by the
    /// table's protocol metadata.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub estimates: PathBuf,
    /// Model written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Zero calibrated values below the significance threshold.
    #[arg(long)]
    pub post_zero: bool,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Table to score; repeat for several trials.
    #[arg(long = "table", required = true)]
    pub tables: Vec<PathBuf>,
    /// Comma-separated heavy-hitter thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Adds the significance threshold when the tables carry protocol metadata.
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "oue")]
    pub protocol: ProtocolKind,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "raw,zero,calibrate")]
    pub variants: Vec<Variant>,
    #[arg(long, default_value = "power-law")]
    pub family: FamilyTag,
    #[arg(long, default_value = "mv")]
    pub method: FitMethod,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Fixed thresholds instead of the grid relative to the significance threshold.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub kmax: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}
