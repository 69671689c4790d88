//! Run configuration: parsed from the command line or a manifest, validated
//! before any compute.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use spheremesh::density::{Builtin, DEFAULT_FLOOR};
use spheremesh::oit_solver::{OitMode, Velocity, DEFAULT_STEPS};
use spheremesh::operators::Cost;

use crate::args::SolveArgs;
use crate::{CliError, MIN_CUBE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ot,
    Oit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CostArg {
    Sqgeo,
    Log,
}

impl From<CostArg> for Cost {
    fn from(c: CostArg) -> Cost {
        match c {
            CostArg::Sqgeo => Cost::SquaredGeodesic,
            CostArg::Log => Cost::Logarithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VelocityArg {
    Stencil,
    Compact,
}

impl From<VelocityArg> for Velocity {
    fn from(v: VelocityArg) -> Velocity {
        match v {
            VelocityArg::Stencil => Velocity::Stencil,
            VelocityArg::Compact => Velocity::Compact,
        }
    }
}

/// Which sampled map moves the output mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapChoice {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Cube { m: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensitySpec {
    Builtin { name: String },
    Raster { path: PathBuf },
}

impl DensitySpec {
    /// `uniform`, `equator` or `raster:PATH`. Raster paths are made absolute
    /// so a manifest reruns from any directory.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if let Some(path) = s.strip_prefix("raster:") {
            if path.is_empty() {
                return Err(CliError::Usage("raster spec needs a path: raster:PATH".into()));
            }
            return Ok(DensitySpec::Raster { path: absolute(Path::new(path))? });
        }
        s.parse::<Builtin>().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(DensitySpec::Builtin { name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSettings {
    pub invert: bool,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtSettings {
    pub cost: CostArg,
    pub tol: f64,
    pub max_iters: usize,
    pub cfl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OitSettings {
    pub steps: usize,
    /// `None` for the exact problem.
    #[serde(with = "maybe_infinite")]
    pub sigma: Option<f64>,
    pub velocity: VelocityArg,
    pub composition_limit: f64,
}

impl OitSettings {
    pub fn mode(&self) -> OitMode {
        self.sigma.map_or(OitMode::Exact, |sigma| OitMode::Inexact { sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSettings {
    /// `None` uses the angular resolution of the stencil directions.
    pub eps_g: Option<f64>,
    pub lipschitz: f64,
    pub eps_local: bool,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub grid: GridSpec,
    pub source: DensitySpec,
    pub target: DensitySpec,
    pub raster: RasterSettings,
    /// Density floor applied before normalization.
    pub floor: f64,
    pub operator: OperatorSettings,
    pub ot: Option<OtSettings>,
    pub oit: Option<OitSettings>,
    pub map: MapChoice,
    pub require_untangled: bool,
    pub output: PathBuf,
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn reject(flag: &str, given: bool, method: &str) -> Result<(), CliError> {
    if given {
        return Err(CliError::Usage(format!("--{flag} does not apply to --method {method}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_args(a: &SolveArgs) -> Result<Self, CliError> {
        let grid = match (&a.grid, a.cube) {
            (Some(path), None) => GridSpec::File { path: absolute(path)? },
            (None, Some(m)) if m >= MIN_CUBE => GridSpec::Cube { m },
            (None, Some(m)) => return Err(CliError::Usage(format!("--cube must be at least {MIN_CUBE}, got {m}"))),
            _ => return Err(CliError::Usage("give exactly one of --grid or --cube".into())),
        };
        let (ot, oit) = match a.method {
            Method::Ot => {
                reject("steps", a.steps.is_some(), "ot")?;
                reject("dt", a.dt.is_some(), "ot")?;
                reject("sigma", a.sigma.is_some(), "ot")?;
                reject("velocity", a.velocity.is_some(), "ot")?;
                reject("composition-limit", a.composition_limit.is_some(), "ot")?;
                let ot = OtSettings {
                    cost: a.cost.unwrap_or(CostArg::Sqgeo),
                    tol: positive("tol", a.tol.unwrap_or(1e-6))?,
                    max_iters: a.max_iters.unwrap_or(50_000),
                    cfl: positive("cfl", a.cfl.unwrap_or(0.5))?,
                };
                if ot.max_iters == 0 {
                    return Err(CliError::Usage("--max-iters must be at least 1".into()));
                }
                (Some(ot), None)
            }
            Method::Oit => {
                reject("cost", a.cost.is_some(), "oit")?;
                reject("tol", a.tol.is_some(), "oit")?;
                reject("max-iters", a.max_iters.is_some(), "oit")?;
                reject("cfl", a.cfl.is_some(), "oit")?;
                if let Some(s) = a.sigma {
                    if !(s >= 0.0) {
                        return Err(CliError::Usage(format!("--sigma must be non-negative, got {s}")));
                    }
                }
                let t_end = a.sigma.map_or(OitMode::Exact, |sigma| OitMode::Inexact { sigma }).end_time().unwrap_or(1.0);
                let steps = match (a.steps, a.dt) {
                    (Some(_), Some(_)) => return Err(CliError::Usage("give at most one of --steps and --dt".into())),
                    (Some(0), None) => return Err(CliError::Usage("--steps must be at least 1".into())),
                    (Some(n), None) => n,
                    (None, Some(dt)) => ((t_end / positive("dt", dt)?).ceil() as usize).max(1),
                    (None, None) => DEFAULT_STEPS,
                };
                let oit = OitSettings {
                    steps,
                    sigma: a.sigma,
                    velocity: a.velocity.unwrap_or(VelocityArg::Stencil),
                    composition_limit: positive("composition-limit", a.composition_limit.unwrap_or(1.0))?,
                };
                (None, Some(oit))
            }
        };
        let raster = RasterSettings {
            invert: a.invert,
            lo: a.lo.unwrap_or(0.0),
            hi: a.hi.unwrap_or(1.0),
        };
        if !(raster.hi > raster.lo) || raster.lo < 0.0 {
            return Err(CliError::Usage(format!("need 0 <= --lo < --hi, got {} and {}", raster.lo, raster.hi)));
        }
        let operator = OperatorSettings {
            eps_g: a.eps_g.map(|v| positive("eps-g", v)).transpose()?,
            lipschitz: positive("lipschitz", a.lipschitz.unwrap_or(std::f64::consts::PI + 1.0))?,
            eps_local: !a.constant_eps,
        };
        let map = a.map.unwrap_or(match a.method {
            Method::Ot => MapChoice::Forward,
            Method::Oit => MapChoice::Inverse,
        });
        if a.method == Method::Ot && map == MapChoice::Inverse {
            return Err(CliError::Usage("the OT solver only produces the forward map".into()));
        }
        Ok(RunConfig {
            method: a.method,
            grid,
            source: DensitySpec::parse(&a.source)?,
            target: DensitySpec::parse(&a.target)?,
            raster,
            floor: positive("floor", a.floor.unwrap_or(DEFAULT_FLOOR))?,
            operator,
            ot,
            oit,
            map,
            require_untangled: a.require_untangled,
            output: absolute(&a.output)?,
        })
    }
}

/// Serializes `f64::INFINITY` as the string `"inf"`; JSON has no infinity.
mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => Some(Repr::Text("inf".into())).serialize(s),
            Some(x) => Some(Repr::Number(*x)).serialize(s),
            None => None::<Repr>.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Number(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::Parser;

    use super::*;
    use crate::args::{Cli, Command};

    fn parse(extra: &[&str]) -> Result<RunConfig, CliError> {
        let mut argv = vec!["spheremesh", "solve", "--target", "equator", "--cube", "6", "-o", "out"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).expect("clap accepts the arguments").command {
            Command::Solve(a) => RunConfig::from_args(&a),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_are_filled_in() {
        let ot = parse(&["--method", "ot"]).unwrap();
        assert_eq!(ot.ot, Some(OtSettings { cost: CostArg::Sqgeo, tol: 1e-6, max_iters: 50_000, cfl: 0.5 }));
        assert_eq!(ot.map, MapChoice::Forward);
        assert!(ot.oit.is_none());
        let oit = parse(&["--method", "oit"]).unwrap();
        let o = oit.oit.unwrap();
        assert_eq!((o.steps, o.sigma, o.velocity), (DEFAULT_STEPS, None, VelocityArg::Stencil));
        assert_eq!(oit.map, MapChoice::Inverse);
        assert_eq!(oit.source, DensitySpec::Builtin { name: "uniform".into() });
        assert!(oit.output.is_absolute());
    }

    #[test]
    fn method_specific_flags_are_checked() {
        for extra in [
            &["--method", "oit", "--cost", "log"][..],
            &["--method", "oit", "--tol", "1e-3"],
            &["--method", "ot", "--steps", "10"],
            &["--method", "ot", "--sigma", "1"],
            &["--method", "ot", "--map", "inverse"],
            &["--method", "oit", "--steps", "10", "--dt", "0.1"],
            &["--method", "oit", "--steps", "0"],
            &["--method", "oit", "--sigma", "-1"],
            &["--method", "ot", "--lo", "2", "--hi", "1"],
            &["--method", "ot", "--eps-g", "0"],
        ] {
            assert!(matches!(parse(extra), Err(CliError::Usage(_))), "{extra:?}");
        }
    }

    #[test]
    fn dt_sets_the_step_count() {
        let c = parse(&["--method", "oit", "--dt", "0.03"]).unwrap();
        assert_eq!(c.oit.unwrap().steps, 34);
        // σ = 1 ends at t = 1/2
        let c = parse(&["--method", "oit", "--sigma", "1", "--dt", "0.1"]).unwrap();
        assert_eq!(c.oit.unwrap().steps, 5);
    }

    #[test]
    fn density_specs() {
        assert_eq!(DensitySpec::parse("equator").unwrap(), DensitySpec::Builtin { name: "equator".into() });
        assert!(matches!(DensitySpec::parse("raster:x.pgm").unwrap(), DensitySpec::Raster { path } if path.is_absolute()));
        assert!(DensitySpec::parse("raster:").is_err());
        assert!(DensitySpec::parse("nowhere").is_err());
    }

    #[test]
    fn manifest_round_trip_keeps_infinite_sigma() {
        let c = parse(&["--method", "oit", "--sigma", "inf"]).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains(r#""sigma":"inf""#));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let c = parse(&["--method", "ot", "--cfl", "0.1234567890123"]).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }
}
