use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "hermann",
    version,
    about = "Root data, orbit geometry and integration for Hermann actions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Restricted and adapted roots with refined multiplicities.
    Roots(RootsArgs),
    /// Tabulate the density theta over the section lattice cell.
    Density(DensityArgs),
    /// Closed-form, algebraic and finite-difference shape spectra at (w, u).
    Shape(ShapeArgs),
    /// Volume ratios, relative densities and the volume fraction of an orbit.
    Volume(VolumeArgs),
    /// Section quadrature against Haar Monte Carlo for invariant functions.
    Integrate(IntegrateArgs),
    /// Run the invariant suite; exits 3 if any check fails.
    Verify(VerifyArgs),
    /// List catalog triads, or export one as triad JSON.
    Catalog(CatalogArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct TriadArgs {
    /// Catalog triad name (see `hermann catalog`).
    #[arg(long, conflicts_with = "triad_file")]
    pub triad: Option<String>,
    /// Triad JSON: {n, sigma1_conjugator, sigma2_conjugator, frames?, name?}.
    #[arg(long)]
    pub triad_file: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Block sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Vec<usize>,
    /// Ignore catalog frames and build t and the chart from scratch.
    #[arg(long)]
    pub greedy_frames: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Tolerance for identity checks (commutators, invariance, cocycles).
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct RootsArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid points per axis over the lattice cell.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ShapeArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Section point, comma separated chart coordinates.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub w: Vec<f64>,
    /// Normal direction in the section.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub u: Vec<f64>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VolumeArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub w: Vec<f64>,
    /// Second point for ratios and relative densities.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Vec<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Test functions: one, cos2, trace1, trace2, trace3.
    #[arg(long, value_delimiter = ',', default_value = "trace1,trace2,trace3")]
    pub f: Vec<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub mc_n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 20_000)]
    pub mc_n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CatalogArgs {
    #[command(flatten)]
    pub triad: TriadArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}
