use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::config::{CostArg, MapChoice, Method, VelocityArg};

/// Density-matching maps on the sphere and mesh redistribution.
///
/// Exit codes: 0 success, 2 invalid arguments, 3 OT iteration limit reached,
/// 4 tangled output with --require-untangled, 5 file I/O, 6 malformed input
/// file or unknown density, 7 incompatible or non-positive densities, 8
/// tangled intermediate OIT map, 9 other numerical failure.
///
/// SPHEREMESH_THREADS sets the worker thread count.
#[derive(Debug, Parser)]
#[command(name = "spheremesh", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a cube-sphere grid file.
    GenGrid(GenGridArgs),
    /// Solve for a map and move the grid with it.
    Solve(Box<SolveArgs>),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("size").required(true).args(["cube", "points"])))]
pub struct GenGridArgs {
    /// Subdivisions per cube edge; the grid has 6m²+2 points.
    #[arg(long)]
    pub cube: Option<usize>,
    /// Total point count, which must equal 6m²+2 for some m.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SolveArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Transport cost (ot only).
    #[arg(long, value_enum)]
    pub cost: Option<CostArg>,
    /// `uniform`, `equator` or `raster:PATH` (binary PGM, equirectangular).
    /// Densities are renormalized, so probability densities are accepted.
    #[arg(long, default_value = "uniform")]
    pub source: String,
    #[arg(long)]
    pub target: String,
    /// Grid file written by gen-grid.
    #[arg(long, conflicts_with = "cube")]
    pub grid: Option<PathBuf>,
    /// Generate a cube-sphere grid with this many subdivisions.
    #[arg(long)]
    pub cube: Option<usize>,

    /// Number of OIT time steps [default: 100].
    #[arg(long)]
    pub steps: Option<usize>,
    /// OIT step size; sets the step count to ⌈end time / dt⌉.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Solve the inexact OIT problem with this σ (`inf` gives the identity).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub velocity: Option<VelocityArg>,
    /// Abort OIT when max |S(T(x)) − x| exceeds this (radians) [default: 1].
    #[arg(long)]
    pub composition_limit: Option<f64>,

    /// OT residual tolerance [default: 1e-6].
    #[arg(long)]
    pub tol: Option<f64>,
    /// OT sweep limit [default: 50000].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// OT pseudo-time step scale [default: 0.5].
    #[arg(long)]
    pub cfl: Option<f64>,

    /// Weight of the monotonicity Laplacian [default: stencil angular step].
    #[arg(long)]
    pub eps_g: Option<f64>,
    /// Lipschitz bound R on the potential [default: π+1].
    #[arg(long = "lipschitz", visible_alias = "R")]
    pub lipschitz: Option<f64>,
    /// Use eps_g everywhere instead of scaling it with the target's log-gradient.
    #[arg(long)]
    pub constant_eps: bool,

    /// Density floor before normalization [default: 1e-3].
    #[arg(long)]
    pub floor: Option<f64>,
    /// Swap black and white when sampling rasters.
    #[arg(long)]
    pub invert: bool,
    /// Raster density for black [default: 0].
    #[arg(long)]
    pub lo: Option<f64>,
    /// Raster density for white [default: 1].
    #[arg(long)]
    pub hi: Option<f64>,

    /// Map that moves the output mesh [default: forward for ot, inverse for oit].
    #[arg(long, value_enum)]
    pub map: Option<MapChoice>,
    /// Exit with code 4 if the moved mesh has inverted triangles.
    #[arg(long)]
    pub require_untangled: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}
