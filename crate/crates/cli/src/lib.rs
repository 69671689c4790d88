//! The `spheremesh` command-line driver.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod config;
pub mod run;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use spheremesh::grid::{gen_cube_sphere, write_grid};

use crate::args::{Cli, Command, GenGridArgs, RerunArgs};
use crate::config::RunConfig;

pub const THREADS_VAR: &str = "SPHEREMESH_THREADS";
/// Smallest cube subdivision the grid generator accepts.
pub const MIN_CUBE: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] spheremesh::Error),
    #[error("moved mesh has {0} inverted triangles")]
    Tangled(usize),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

impl CliError {
    pub fn file(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        CliError::File { path: path.into(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        use spheremesh::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Tangled(_) => 4,
            CliError::File { .. } => 5,
            CliError::Solver(e) => match e {
                E::MaxItersExceeded { .. } => 3,
                E::Io(_) => 5,
                E::GridFormat(_) | E::UnsupportedRasterFormat(_) | E::UnknownDensityName(_) | E::DegenerateRange { .. } => 6,
                E::MassImbalance(_) | E::NonpositiveDensity(_) => 7,
                E::TangledIntermediateMap(..) => 8,
                _ => 9,
            },
        }
    }
}

/// Sizes the global thread pool from `SPHEREMESH_THREADS` if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_VAR}={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::GenGrid(a) => gen_grid(&a),
        Command::Solve(a) => {
            let cfg = match RunConfig::from_args(&a) {
                Ok(cfg) => cfg,
                Err(e) => {
                    run::record_rejected(&a.output, &e);
                    return Err(e);
                }
            };
            run::execute(&cfg)
        }
        Command::Rerun(a) => rerun(&a),
    }
}

fn gen_grid(a: &GenGridArgs) -> Result<(), CliError> {
    let m = match (a.cube, a.points) {
        (Some(m), _) => m,
        (None, Some(n)) => cube_size(n).ok_or_else(|| CliError::Usage(format!("{n} is not 6m²+2 for any m")))?,
        (None, None) => unreachable!("clap requires --cube or --points"),
    };
    if m < MIN_CUBE {
        return Err(CliError::Usage(format!("--cube must be at least {MIN_CUBE}, got {m}")));
    }
    let g = gen_cube_sphere(m);
    let file = File::create(&a.output).map_err(|e| CliError::file(&a.output, e))?;
    write_grid(&g, BufWriter::new(file))?;
    println!("N = {}", g.len());
    println!("h = {:.6}", g.h());
    Ok(())
}

/// `m` with `6m² + 2 = n`.
pub fn cube_size(n: usize) -> Option<usize> {
    let k = n.checked_sub(2)?;
    if k == 0 || k % 6 != 0 {
        return None;
    }
    let m = ((k / 6) as f64).sqrt().round() as usize;
    (m * m == k / 6).then_some(m)
}

fn rerun(a: &RerunArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| CliError::file(&a.manifest, e))?;
    let manifest: run::Manifest = serde_json::from_str(&text).map_err(|e| CliError::file(&a.manifest, e))?;
    let mut cfg = manifest
        .config
        .ok_or_else(|| CliError::Usage(format!("{} records a rejected command line", a.manifest.display())))?;
    if let Some(out) = &a.output {
        cfg.output.clone_from(out);
    }
    run::execute(&cfg)
}
