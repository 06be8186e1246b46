use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kimmel::treesim::{Conditioning, Sampler};

#[derive(Debug, Parser)]
#[command(name = "kimmel", version, about = "Parasites in dividing cells: exact solvers and tree simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regime of a law, from a config or from the two daughter means.
    Classify(ClassifyArgs),
    /// Quasistationary law of the random cell line.
    Yaglom(YaglomArgs),
    /// Run a tree ensemble and report per-generation aggregates.
    Simulate(SimulateArgs),
    /// Cell proportions and counts against the exact line-process limits.
    Compare(CompareArgs),
    /// Contaminated fraction of the population at the horizon.
    Recovery(RecoveryArgs),
    /// Ancestor histogram against the size-biased quasistationary law.
    Sizebias(SizebiasArgs),
    /// Mean contaminated fraction against the exact line survival probability.
    IdentityCheck(IdentityArgs),
    /// Decay and growth fits for laws without a limit theorem.
    D4Explore(D4Args),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Classify(a) => &a.common,
            Command::Yaglom(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::Compare(a) => &a.common,
            Command::Recovery(a) => &a.common,
            Command::Sizebias(a) => &a.common,
            Command::IdentityCheck(a) => &a.common,
            Command::D4Explore(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    /// Simulate unconditioned trees and discard those that die out.
    Rejection,
    /// Draw conditioned trees directly.
    Exact,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Rejection => Sampler::Rejection,
            SamplerArg::Exact => Sampler::HTransform,
        }
    }
}

/// `none`, `horizon` or `margin=Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionArg(pub Conditioning);

impl FromStr for ConditionArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self(Conditioning::None)),
            "horizon" => Ok(Self(Conditioning::SurviveAtHorizon)),
            _ => s
                .strip_prefix("margin=")
                .and_then(|d| d.parse::<u32>().ok())
                .map(|d| Self(Conditioning::SurviveWithMargin(d)))
                .ok_or_else(|| format!("expected none, horizon or margin=<generations>, got {s:?}")),
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report directory. Nothing is written for `classify` without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Turn the report comparisons into a pass/fail exit code.
    #[arg(long)]
    pub assert: bool,
    /// Worker threads for replicates (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Truncation bound of the exact solvers.
    #[arg(long)]
    pub kmax: Option<usize>,
}

/// Flags of the simulating commands.
#[derive(Debug, Clone, Args)]
pub struct Ensemble {
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u32>,
    /// Largest cell count tracked individually in histograms.
    #[arg(long = "k-top")]
    pub k_top: Option<usize>,
    #[arg(long)]
    pub condition: Option<ConditionArg>,
    #[arg(long, value_enum, default_value_t = SamplerArg::Rejection)]
    pub sampler: SamplerArg,
    /// Cap on the attempted replicates under rejection sampling.
    #[arg(long)]
    pub max_attempts: Option<u64>,
    /// Parasite count at which a cell switches to mean-field growth.
    #[arg(long)]
    pub cell_cap: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m0: Option<f64>,
    #[arg(long)]
    pub m1: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct YaglomArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
    /// Tag the parasites present at this generation.
    #[arg(long)]
    pub tags_from: Option<u32>,
    /// Largest ancestor count included in the multiplicity fraction.
    #[arg(long, default_value_t = 10)]
    pub k_anc: u64,
    /// Thresholds K for the share of parasites in cells holding more than K.
    #[arg(long, value_delimiter = ',')]
    pub heavy_k: Vec<usize>,
    /// Generation of the heavy-cell share (default: horizon).
    #[arg(long)]
    pub heavy_generation: Option<u32>,
    /// Record the generation-`n0` ancestor of every cell at `n0 + p`.
    #[arg(long, requires = "p")]
    pub n0: Option<u32>,
    #[arg(long, requires = "n0")]
    pub p: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
    /// Largest L1 distance accepted under --assert.
    #[arg(long, default_value_t = 0.1)]
    pub l1_max: f64,
    /// Also report the headline statistics for each of these margins.
    #[arg(long, value_delimiter = ',')]
    pub sweep_margins: Vec<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct RecoveryArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
}

#[derive(Debug, Clone, Args)]
pub struct SizebiasArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
    #[arg(long, default_value_t = 8)]
    pub n0: u32,
    #[arg(long, default_value_t = 8)]
    pub p: u32,
    #[arg(long, default_value_t = 0.1)]
    pub l1_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IdentityArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
    /// Largest standardized deviation accepted under --assert.
    #[arg(long, default_value_t = 4.0)]
    pub z_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct D4Args {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ensemble: Ensemble,
    /// Generations used in the survival decay fit.
    #[arg(long, value_delimiter = ',')]
    pub fit_generations: Vec<u32>,
}
