//! Positive density fields normalized to total mass 4π (uniform ≡ 1).

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridId, ScalarField};

/// Default floor, relative to the mean density.
pub const DEFAULT_FLOOR: f64 = 1e-3;


/// Nodal density with respect to area. Values are strictly positive; fields
/// built by [`DensityField::normalized`] integrate to 4π.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid_id: GridId,
    pub values: Vec<f64>,
}

impl DensityField {
    /// Wraps positive values without normalizing them.
    pub fn from_values(g: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonpositiveDensity(min));
        }
        Ok(DensityField { grid_id: g.id(), values })
    }

    pub fn uniform(g: &Grid) -> Self {
        DensityField { grid_id: g.id(), values: vec![1.0; g.len()] }
    }

    /// Floors non-negative raw values at `floor` times the mean and rescales
    /// to total mass 4π. The floor and the scale are solved jointly, so the
    /// result satisfies both exactly: `vᵢ = max(c·rawᵢ, floor)` with
    /// `Σ wᵢvᵢ = 4π`.
    pub fn normalized(g: &Grid, raw: &[f64], floor: f64) -> Result<Self> {
        if raw.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonpositiveDensity(min));
        }
        let w = g.quadrature_weights();
        let total_w: f64 = w.iter().sum();
        if min >= floor && (g.integrate(raw) - total_w).abs() <= 1e-13 * total_w {
            return Ok(DensityField { grid_id: g.id(), values: raw.to_vec() });
        }
        let scale = floor_scale(w, raw, floor, total_w)?;
        let values = raw.iter().map(|&r| (scale * r).max(floor)).collect();
        Ok(DensityField { grid_id: g.id(), values })
    }

    /// Re-applies [`DensityField::normalized`]; idempotent.
    pub fn normalize(&self, g: &Grid, floor: f64) -> Result<Self> {
        Self::normalized(g, &self.values, floor)
    }

    pub fn as_scalar(&self) -> ScalarField {
        ScalarField { grid_id: self.grid_id, values: self.values.clone() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check(&self, g: &Grid) -> Result<()> {
        if self.grid_id != g.id() || self.values.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

// Solves Σ wᵢ max(c·rᵢ, floor) = total for c; the left side is piecewise
// linear and increasing in c.
fn floor_scale(w: &[f64], raw: &[f64], floor: f64, total: f64) -> Result<f64> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut high_mass: f64 = order.iter().map(|&i| w[i] * raw[i]).sum();
    let mut low_weight = 0.0;
    for k in 0..order.len() {
        // nodes order[..k] sit on the floor
        if high_mass > 0.0 {
            let c = (total - floor * low_weight) / high_mass;
            let below_ok = k == 0 || c * raw[order[k - 1]] <= floor;
            if c > 0.0 && below_ok && c * raw[order[k]] >= floor {
                return Ok(c);
            }
        }
        let i = order[k];
        low_weight += w[i];
        high_mass -= w[i] * raw[i];
    }
    Err(Error::NonpositiveDensity(0.0))
}

/// Analytic densities available by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Uniform,
    Equator,
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Builtin::Uniform),
            "equator" => Ok(Builtin::Equator),
            other => Err(Error::UnknownDensityName(other.to_string())),
        }
    }
}

/// `(1 − exp(−(arccos z − π/2)² / 30)) / 3.53552`, before flooring and
/// normalization. It vanishes on the equator and peaks at the poles. The
/// constant only matters for documentation since fields are renormalized.
pub fn equator_profile(z: f64) -> f64 {
    let x = z.clamp(-1.0, 1.0).acos() - FRAC_PI_2;
    -(-x * x / 30.0).exp_m1() / 3.53552
}

pub fn builtin_density(name: &str, g: &Grid) -> Result<DensityField> {
    builtin(name.parse()?, g, DEFAULT_FLOOR)
}

pub fn builtin(which: Builtin, g: &Grid, floor: f64) -> Result<DensityField> {
    match which {
        Builtin::Uniform => Ok(DensityField::uniform(g)),
        Builtin::Equator => {
            let raw: Vec<f64> = g.points().iter().map(|p| equator_profile(p.z())).collect();
            DensityField::normalized(g, &raw, floor)
        }
    }
}

/// `|∫ρ₀ − ∫ρ₁|` under the grid quadrature.
pub fn mass_balance_check(g: &Grid, rho0: &DensityField, rho1: &DensityField) -> f64 {
    (g.integrate(&rho0.values) - g.integrate(&rho1.values)).abs()
}

/// Single-channel equirectangular image: row 0 is the north edge, column 0
/// starts at longitude −π.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_pgm(&std::fs::read(path)?)
    }

    /// Parses binary (P5) or plain (P2) PGM with at most 8 bits per sample.
    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::UnsupportedRasterFormat(m.to_string());
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(bad("truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let width = num(token(&mut pos)?)?;
        let height = num(token(&mut pos)?)?;
        let maxval = num(token(&mut pos)?)?;
        if width == 0 || height == 0 {
            return Err(bad("empty image"));
        }
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit samples are supported"));
        }
        let n = width * height;
        let pixels = match magic.as_str() {
            "P5" => {
                let start = pos + 1;
                if bytes.len() < start + n {
                    return Err(bad("truncated pixel data"));
                }
                bytes[start..start + n].to_vec()
            }
            "P2" => {
                let mut px = Vec::with_capacity(n);
                for _ in 0..n {
                    let v = num(token(&mut pos)?)?;
                    if v > maxval {
                        return Err(bad("sample exceeds maxval"));
                    }
                    px.push(v as u8);
                }
                px
            }
            other => return Err(bad(&format!("magic {other:?} (expected P2 or P5)"))),
        };
        Ok(Raster { width, height, maxval: maxval as u16, pixels })
    }

    /// Nearest pixel containing `(lat, lon)`.
    pub fn sample(&self, lat: f64, lon: f64) -> u8 {
        let r = ((FRAC_PI_2 - lat) / PI * self.height as f64).floor();
        let c = ((lon + PI) / (2.0 * PI) * self.width as f64).floor();
        let r = (r.max(0.0) as usize).min(self.height - 1);
        let c = (c.max(0.0) as usize).min(self.width - 1);
        self.pixels[r * self.width + c]
    }
}

/// How raster samples become density values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    pub invert: bool,
    pub floor: f64,
    /// Density assigned to black (after optional inversion).
    pub lo: f64,
    /// Density assigned to white.
    pub hi: f64,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions { invert: false, floor: DEFAULT_FLOOR, lo: 0.0, hi: 1.0 }
    }
}

/// Raw (unnormalized) nodal values: `lo + (hi − lo)·v/maxval`, with `v`
/// replaced by `maxval − v` when inverting.
pub fn sample_raster(g: &Grid, img: &Raster, opts: &RasterOptions) -> Result<Vec<f64>> {
    if !(opts.hi > opts.lo) || opts.lo < 0.0 {
        return Err(Error::DegenerateRange { lo: opts.lo, hi: opts.hi });
    }
    let max = f64::from(img.maxval);
    Ok(g.points()
        .iter()
        .map(|p| {
            let v = f64::from(img.sample(p.latitude(), p.longitude()));
            let v = if opts.invert { max - v } else { v };
            opts.lo + (opts.hi - opts.lo) * v / max
        })
        .collect())
}

pub fn from_raster(img: &Raster, opts: &RasterOptions, g: &Grid) -> Result<DensityField> {
    DensityField::normalized(g, &sample_raster(g, img, opts)?, opts.floor)
}
