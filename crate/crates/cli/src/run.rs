//! Executes a [`RunConfig`] and writes its outputs and manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use spheremesh::density::{builtin, from_raster, DensityField, Raster, RasterOptions};
use spheremesh::grid::{gen_cube_sphere, read_grid, write_grid, Grid, MapField};
use spheremesh::mesh_pipeline::{apply_map, pushforward_density, tangling_report, target_at_moved, TanglingReport};
use spheremesh::oit_solver::{solve_oit, OitConfig};
use spheremesh::operators::{Cost, OperatorParams};
use spheremesh::ot_solver::{extract_map, solve_ot_report, OtProblem, SolverConfig};
use spheremesh::stencil::StencilTable;
use spheremesh::Error;

use crate::config::{DensitySpec, GridSpec, MapChoice, Method, RunConfig};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Rejected,
}

/// Values derived from the configuration once the grid is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub points: usize,
    pub triangles: usize,
    pub h: f64,
    pub eps_g: f64,
    pub eps_h: f64,
    pub lipschitz: f64,
    pub eps_local: bool,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtResults {
    pub iterations: usize,
    pub residual: f64,
    pub offset: f64,
    pub converged: bool,
    pub final_cfl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OitResults {
    pub theta: f64,
    pub t_end: f64,
    pub steps: usize,
    pub max_mass_error: f64,
    pub max_composition_error: f64,
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tangling {
    pub triangle_count: usize,
    pub inverted_count: usize,
    pub inverted_fraction: f64,
    pub min_area_ratio: f64,
    pub max_area_ratio: f64,
    pub worst_triangles: Vec<usize>,
}

impl From<&TanglingReport> for Tangling {
    fn from(r: &TanglingReport) -> Self {
        Tangling {
            triangle_count: r.triangle_count,
            inverted_count: r.inverted_count,
            inverted_fraction: r.inverted_fraction,
            min_area_ratio: r.min_area_ratio,
            max_area_ratio: r.max_area_ratio,
            worst_triangles: r.worst_triangles.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub ot: Option<OtResults>,
    pub oit: Option<OitResults>,
    pub max_displacement: Option<f64>,
    pub tangling: Option<Tangling>,
    /// Relative L1 distance between the pushforward of the source and the
    /// target, when the moved mesh is untangled.
    pub l1: Option<f64>,
    pub l1_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub status: Status,
    pub exit_code: u8,
    pub error: Option<String>,
    /// Absent when the command line was rejected.
    pub config: Option<RunConfig>,
    pub resolved: Option<Resolved>,
    pub results: Results,
    pub files: Vec<String>,
}

impl Manifest {
    fn new(config: Option<RunConfig>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: Status::Ok,
            exit_code: 0,
            error: None,
            config,
            resolved: None,
            results: Results::default(),
            files: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::file(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::file(&path, e))
    }
}

/// Best-effort manifest for a command line that failed validation.
pub fn record_rejected(dir: &Path, e: &CliError) {
    if fs::create_dir_all(dir).is_err() {
        return;
    }
    let mut m = Manifest::new(None);
    m.status = Status::Rejected;
    m.exit_code = e.exit_code();
    m.error = Some(e.to_string());
    let _ = m.write(dir);
}

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output).map_err(|e| CliError::file(&cfg.output, e))?;
    let mut manifest = Manifest::new(Some(cfg.clone()));
    let start = Instant::now();
    let outcome = Run { cfg, manifest: &mut manifest }.go();
    if let Err(e) = &outcome {
        manifest.status = Status::Failed;
        manifest.exit_code = e.exit_code();
        manifest.error = Some(e.to_string());
    }
    manifest.write(&cfg.output)?;
    print_summary(&manifest, start.elapsed().as_secs_f64());
    outcome
}

fn print_summary(m: &Manifest, seconds: f64) {
    if let Some(r) = &m.resolved {
        println!("N = {}, h = {:.6}", r.points, r.h);
    }
    if let Some(ot) = &m.results.ot {
        println!("OT: {} sweeps, residual {:.3e}, converged {}", ot.iterations, ot.residual, ot.converged);
    }
    if let Some(oit) = &m.results.oit {
        println!("OIT: θ = {:.6}, {} steps to t = {}", oit.theta, oit.steps, oit.t_end);
    }
    if let Some(t) = &m.results.tangling {
        println!("inverted_fraction = {:e} ({} of {})", t.inverted_fraction, t.inverted_count, t.triangle_count);
    }
    match (&m.results.l1, &m.results.l1_note) {
        (Some(l1), _) => println!("L1 = {l1:.6}"),
        (None, Some(note)) => println!("L1 unavailable: {note}"),
        _ => {}
    }
    println!("{:?} after {seconds:.1} s", m.status);
}

struct Run<'a> {
    cfg: &'a RunConfig,
    manifest: &'a mut Manifest,
}

impl Run<'_> {
    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.cfg.output.join(name);
        let file = File::create(&path).map_err(|e| CliError::file(&path, e))?;
        self.manifest.files.push(name.to_string());
        Ok((path, BufWriter::new(file)))
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let (path, mut w) = self.create(name)?;
        f(&mut w).and_then(|()| w.flush()).map_err(|e| CliError::file(&path, e))
    }

    fn go(mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        let g = load_grid(&cfg.grid)?;
        let st = StencilTable::build(&g)?;
        let mut params = OperatorParams::defaults(&g, &st);
        if let Some(eps) = cfg.operator.eps_g {
            params.eps_g = eps;
        }
        params.lipschitz_bound = cfg.operator.lipschitz;
        params.eps_local = cfg.operator.eps_local;
        let t_end = cfg.oit.map(|o| o.mode().end_time()).transpose()?;
        self.manifest.resolved = Some(Resolved {
            points: g.len(),
            triangles: g.triangles().len(),
            h: g.h(),
            eps_g: params.eps_g,
            eps_h: params.eps_h,
            lipschitz: params.lipschitz_bound,
            eps_local: params.eps_local,
            t_end,
            dt: cfg.oit.zip(t_end).map(|(o, t)| t / o.steps as f64),
        });
        let (name, mut w) = self.create("source.grid")?;
        write_grid(&g, &mut w).and_then(|()| w.flush().map_err(Error::from)).map_err(|e| CliError::file(name, e))?;

        let f0 = load_density(&cfg.source, cfg, &g)?;
        let f1 = load_density(&cfg.target, cfg, &g)?;

        let mut incomplete = None;
        let (forward, inverse) = match cfg.method {
            Method::Ot => {
                let ot = cfg.ot.expect("validated");
                let cost = Cost::from(ot.cost);
                let problem = OtProblem { grid: &g, stencils: &st, source: &f0, target: &f1, cost, params };
                let solver = SolverConfig { cfl: ot.cfl, tol: ot.tol, max_iters: ot.max_iters, ..SolverConfig::default() };
                let s = solve_ot_report(&problem, &solver)?;
                self.manifest.results.ot = Some(OtResults {
                    iterations: s.iterations,
                    residual: s.residual,
                    offset: s.offset,
                    converged: s.converged,
                    final_cfl: s.cfl,
                });
                self.write_with("residuals.csv", |w| {
                    writeln!(w, "sweep,residual")?;
                    s.history.iter().enumerate().try_for_each(|(k, r)| writeln!(w, "{},{r:e}", k + 1))
                })?;
                self.write_with("potential.csv", |w| {
                    writeln!(w, "node,u")?;
                    s.u.values.iter().enumerate().try_for_each(|(i, u)| writeln!(w, "{i},{u:e}"))
                })?;
                if !s.converged {
                    incomplete = Some(Error::MaxItersExceeded { iters: s.iterations, residual: s.residual });
                }
                (extract_map(&g, &st, &s.u, cost)?, None)
            }
            Method::Oit => {
                let o = cfg.oit.expect("validated");
                let oc = OitConfig {
                    steps: o.steps,
                    mode: o.mode(),
                    velocity: o.velocity.into(),
                    composition_limit: o.composition_limit,
                };
                let sol = solve_oit(&g, &st, &f0, &f1, params, &oc)?;
                let reports = &sol.reports;
                self.manifest.results.oit = Some(OitResults {
                    theta: sol.theta,
                    t_end: sol.t_end,
                    steps: reports.len(),
                    max_mass_error: reports.iter().map(|r| r.mass_error).fold(0.0, f64::max),
                    max_composition_error: reports.iter().map(|r| r.composition_error).fold(0.0, f64::max),
                    fallback_steps: reports.iter().filter(|r| r.used_fallback).count(),
                });
                self.write_with("residuals.csv", |w| {
                    writeln!(w, "step,t,mass_error,mass_rate_error,composition_error,max_speed,poisson_iterations,used_fallback")?;
                    reports.iter().enumerate().try_for_each(|(k, r)| {
                        writeln!(
                            w,
                            "{},{:e},{:e},{:e},{:e},{:e},{},{}",
                            k + 1,
                            r.t,
                            r.mass_error,
                            r.mass_rate_error,
                            r.composition_error,
                            r.max_speed,
                            r.poisson_iterations,
                            r.used_fallback
                        )
                    })
                })?;
                (sol.forward, Some(sol.inverse))
            }
        };

        self.write_with("forward.csv", |w| write_map(w, &forward))?;
        if let Some(inv) = &inverse {
            self.write_with("inverse.csv", |w| write_map(w, inv))?;
        }
        let chosen = match cfg.map {
            MapChoice::Forward => &forward,
            MapChoice::Inverse => inverse.as_ref().expect("validated"),
        };
        self.manifest.results.max_displacement = Some(chosen.max_displacement(&g));
        let moved = apply_map(&g, chosen)?;
        let (path, mut w) = self.create("moved.grid")?;
        moved.write_grid(&mut w).map_err(|e| CliError::file(&path, e))?;
        let (path, mut w) = self.create("moved.obj")?;
        moved.write_obj(&mut w).map_err(|e| CliError::file(&path, e))?;

        let report = tangling_report(&g, &moved)?;
        self.write_with("tangling.csv", |w| writeln!(w, "{}\n{}", TanglingReport::CSV_HEADER, report.to_csv_row()))?;
        self.manifest.results.tangling = Some(Tangling::from(&report));

        let at_moved = target_at_moved(&g, &moved, &f1)?;
        let push = match pushforward_density(&g, &moved, &f0) {
            Ok(p) => {
                self.manifest.results.l1 = Some(p.relative_l1(&at_moved));
                Some(p)
            }
            Err(e @ Error::UnreliableJacobian(_)) => {
                self.manifest.results.l1_note = Some(e.to_string());
                None
            }
            Err(e) => return Err(e.into()),
        };
        self.write_with("density.csv", |w| {
            writeln!(w, "node,lat,lon,source,target,moved_lat,moved_lon,target_at_moved,pushforward")?;
            for (i, (x, y)) in g.points().iter().zip(moved.points()).enumerate() {
                let pf = push.as_ref().map(|p| format!("{:e}", p.density[i])).unwrap_or_default();
                writeln!(
                    w,
                    "{i},{:.10},{:.10},{:e},{:e},{:.10},{:.10},{:e},{pf}",
                    x.latitude().to_degrees(),
                    x.longitude().to_degrees(),
                    f0.values[i],
                    f1.values[i],
                    y.latitude().to_degrees(),
                    y.longitude().to_degrees(),
                    at_moved[i],
                )?;
            }
            Ok(())
        })?;

        if let Some(e) = incomplete {
            return Err(e.into());
        }
        if cfg.require_untangled && report.inverted_count > 0 {
            return Err(CliError::Tangled(report.inverted_count));
        }
        Ok(())
    }
}

fn write_map(w: &mut impl Write, m: &MapField) -> std::io::Result<()> {
    writeln!(w, "node,x,y,z")?;
    m.images.iter().enumerate().try_for_each(|(i, p)| writeln!(w, "{i},{:.16e},{:.16e},{:.16e}", p.x(), p.y(), p.z()))
}

fn load_grid(spec: &GridSpec) -> Result<Grid, CliError> {
    match spec {
        GridSpec::Cube { m } => Ok(gen_cube_sphere(*m)),
        GridSpec::File { path } => {
            let file = File::open(path).map_err(|e| CliError::file(path, e))?;
            read_grid(BufReader::new(file)).map_err(|e| match e {
                Error::Io(msg) => CliError::file(path, msg),
                e => e.into(),
            })
        }
    }
}

fn load_density(spec: &DensitySpec, cfg: &RunConfig, g: &Grid) -> Result<DensityField, CliError> {
    match spec {
        DensitySpec::Builtin { name } => Ok(builtin(name.parse()?, g, cfg.floor)?),
        DensitySpec::Raster { path } => {
            let img = Raster::open(path).map_err(|e| match e {
                Error::Io(msg) => CliError::file(path, msg),
                e => e.into(),
            })?;
            let opts = RasterOptions { invert: cfg.raster.invert, floor: cfg.floor, lo: cfg.raster.lo, hi: cfg.raster.hi };
            Ok(from_raster(&img, &opts, g)?)
        }
    }
}
