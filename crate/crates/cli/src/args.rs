//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mink", version, about = "Numerical laboratory for the even L_p Minkowski problem")]
pub struct Cli {
    /// JSON file whose keys mirror the flags of the chosen subcommand; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Create or inspect body files.
    #[command(subcommand)]
    Body(BodyCommand),
    /// Minimize the L_p Minkowski functional.
    Solve(SolveArgs),
    /// Low end of the constrained spectrum of a body.
    Eigen(EigenArgs),
    /// First even eigenvalue along a family.
    EigenSweep(SweepArgs),
    /// L_p Brunn-Minkowski or Minkowski inequality on pairs of bodies.
    BmCheck(BmArgs),
    /// Second variation at a critical point, with its finite-difference check.
    Variation(VariationArgs),
    /// Pairing stability and semicontinuity along a smoothed family.
    Stability(StabilityArgs),
    /// Multi-start search for a second solution near an lq_ball saddle.
    ProbeNonunique(ProbeArgs),
    /// Quick checks of every module.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum BodyCommand {
    /// Build a catalog body.
    Make(MakeArgs),
    /// Print summary quantities of a body.
    Info(BodyInput),
    /// Boundary points `∇h(u)` as CSV.
    Boundary(BoundaryArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DomainArgs {
    /// Sphere dimension: 1 (circle) or 2.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Resolution; defaults depend on the command.
    #[arg(long)]
    pub res: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MakeArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Catalog entry as JSON, e.g. '{"name":"ellipsoid","a":[[2,0],[0,1]]}'.
    #[arg(long, default_value = r#"{"name":"ball","r":1}"#)]
    pub catalog: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BodyInput {
    /// Body file, or any report that embeds one.
    #[arg(long)]
    pub body: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    /// const:c, file:path or expr:name[:a=..,k=..].
    #[arg(long, default_value = "const:1")]
    pub f: String,
    /// `ball`, a body file, or a catalog entry as JSON.
    #[arg(long, default_value = "ball")]
    pub init: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub newton_threshold: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub step_min: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long)]
    pub allow_p_gt_1: bool,
    #[arg(long)]
    pub self_check: bool,
    /// Abort if the normalized solution leaves `[1/C1, C1]`.
    #[arg(long)]
    pub chll_c1: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Per-iteration residual and functional values as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Lq,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum, default_value_t = Family::Lq)]
    pub family: Family,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    pub q: Vec<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    Bm,
    Minkowski,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BmArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// JSON list of {id, l, k} with body files or catalog entries.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Number of seeded random pairs when no pairs file is given.
    #[arg(long, default_value_t = 20)]
    pub random_pairs: usize,
    #[arg(long, value_enum, default_value_t = Inequality::Bm)]
    pub check: Inequality,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VariationArgs {
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    #[arg(long, default_value = "const:1")]
    pub f: String,
    /// Direction z, in the same source syntax as f.
    #[arg(long, default_value = "expr:cos-bump")]
    pub dir: String,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum, default_value_t = Family::Lq)]
    pub family: Family,
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,12,16,24")]
    pub schedule: Vec<f64>,
    /// Test function u, in the source syntax of f.
    #[arg(long, default_value = "expr:cos-bump:a=1,k=1,c=0")]
    pub u: String,
    /// Weight φ, in the source syntax of f.
    #[arg(long, default_value = "const:1")]
    pub phi: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long, default_value_t = 256)]
    pub res: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    #[arg(long, default_value_t = 16.0)]
    pub q: f64,
    /// Random starts in addition to the ball and the two eigen-direction starts.
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
    #[arg(long, default_value_t = 0.05)]
    pub perturbation: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelftestArgs {}
