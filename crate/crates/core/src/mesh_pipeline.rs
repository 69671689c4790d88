//! Moving a mesh with a sampled map and checking the result: orientation
//! flips, area ratios, and the pushforward density from nodal Jacobians.

use std::io::Write;

use rayon::prelude::*;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::grid::{Grid, MapField};
use crate::sphere::{orient, spherical_triangle_area, SpherePoint, Vec3};

/// Triangles with a moved area below this count as inverted.
pub const DEGENERATE_AREA: f64 = 1e-14;
const WORST_LISTED: usize = 10;

/// The source mesh with every node moved to its image.
#[derive(Debug, Clone)]
pub struct MovedMesh<'a> {
    pub source: &'a Grid,
    pub images: MapField,
}

impl MovedMesh<'_> {
    pub fn points(&self) -> &[SpherePoint] {
        &self.images.images
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        self.source.triangles()
    }

    fn vertices(&self, t: usize) -> [Vec3; 3] {
        self.triangles()[t].map(|v| *self.images.images[v].vec())
    }

    /// Signed spherical area of triangle `t` (negative when its
    /// orientation is reversed).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        spherical_triangle_area(&a, &b, &c).copysign(orient(&a, &b, &c))
    }

    /// Writes the moved mesh in the grid file format.
    pub fn write_grid<W: Write>(&self, out: W) -> Result<()> {
        crate::grid::write_mesh(self.points(), self.triangles(), self.source.h(), out)
    }

    /// Wavefront OBJ with 1-based faces.
    pub fn write_obj<W: Write>(&self, mut out: W) -> Result<()> {
        for p in self.points() {
            writeln!(out, "v {:.16e} {:.16e} {:.16e}", p.x(), p.y(), p.z())?;
        }
        for t in self.triangles() {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn apply_map<'a>(g: &'a Grid, m: &MapField) -> Result<MovedMesh<'a>> {
    m.check(g)?;
    Ok(MovedMesh { source: g, images: m.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TanglingReport {
    pub triangle_count: usize,
    pub inverted_count: usize,
    pub inverted_fraction: f64,
    /// Smallest signed moved/source area ratio.
    pub min_area_ratio: f64,
    pub max_area_ratio: f64,
    /// Up to ten triangles with the smallest signed area ratio, worst first.
    pub worst_triangles: Vec<usize>,
}

impl TanglingReport {
    pub const CSV_HEADER: &'static str =
        "triangle_count,inverted_count,inverted_fraction,min_area_ratio,max_area_ratio,worst_triangles";

    pub fn to_key_value(&self) -> String {
        format!(
            "triangle_count={}\ninverted_count={}\ninverted_fraction={:e}\nmin_area_ratio={:e}\nmax_area_ratio={:e}\nworst_triangles={}\n",
            self.triangle_count,
            self.inverted_count,
            self.inverted_fraction,
            self.min_area_ratio,
            self.max_area_ratio,
            self.worst_list(" "),
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{}",
            self.triangle_count,
            self.inverted_count,
            self.inverted_fraction,
            self.min_area_ratio,
            self.max_area_ratio,
            self.worst_list(" "),
        )
    }

    fn worst_list(&self, sep: &str) -> String {
        self.worst_triangles.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(sep)
    }
}

pub fn tangling_report(src: &Grid, moved: &MovedMesh) -> Result<TanglingReport> {
    if moved.source.id() != src.id() {
        return Err(Error::GridMismatch);
    }
    let ratios: Vec<(f64, bool)> = (0..src.triangles().len())
        .into_par_iter()
        .map(|t| {
            let [a, b, c] = src.tri_vertices(t);
            let before = spherical_triangle_area(&a, &b, &c).copysign(orient(&a, &b, &c));
            let after = moved.signed_area(t);
            let inverted = after.signum() != before.signum() || after.abs() < DEGENERATE_AREA;
            (after / before, inverted)
        })
        .collect();
    let inverted_count = ratios.iter().filter(|r| r.1).count();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| ratios[a].0.total_cmp(&ratios[b].0).then(a.cmp(&b)));
    order.truncate(WORST_LISTED);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.0), hi.max(r.0)));
    Ok(TanglingReport {
        triangle_count: ratios.len(),
        inverted_count,
        inverted_fraction: inverted_count as f64 / ratios.len() as f64,
        min_area_ratio: lo,
        max_area_ratio: hi,
        worst_triangles: order,
    })
}

/// Nodal Jacobians and the pushed-forward density on the moved nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushforward {
    /// Moved over source incident-triangle area sums, per node.
    pub jacobian: Vec<f64>,
    /// `ρ₀(i) / J(i)`.
    pub density: Vec<f64>,
    /// Vertex-lumped areas of the moved mesh.
    pub moved_weights: Vec<f64>,
}

impl Pushforward {
    /// `Σ w′|ρ − ρ₁(yᵢ)| / Σ w′ρ₁(yᵢ)` with `ρ₁` sampled at the moved
    /// nodes `yᵢ` and `w′` the moved-mesh weights.
    pub fn relative_l1(&self, target_at_moved: &[f64]) -> f64 {
        let (num, den) = self
            .density
            .iter()
            .zip(target_at_moved)
            .zip(&self.moved_weights)
            .fold((0.0, 0.0), |(n, d), ((p, t), w)| (n + w * (p - t).abs(), d + w * t));
        num / den
    }

    /// `∫ρ` on the moved mesh.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().zip(&self.moved_weights).map(|(p, w)| p * w).sum()
    }
}

pub fn pushforward_density(src: &Grid, moved: &MovedMesh, rho0: &DensityField) -> Result<Pushforward> {
    let report = tangling_report(src, moved)?;
    if report.inverted_count > 0 {
        return Err(Error::UnreliableJacobian(report.inverted_count));
    }
    rho0.check(src)?;
    let areas: Vec<f64> = (0..src.triangles().len()).map(|t| moved.signed_area(t)).collect();
    let moved_weights: Vec<f64> =
        (0..src.len()).map(|i| src.incident_triangles(i).iter().map(|&t| areas[t]).sum::<f64>() / 3.0).collect();
    let jacobian: Vec<f64> = moved_weights.iter().zip(src.quadrature_weights()).map(|(m, s)| m / s).collect();
    let density = rho0.values.iter().zip(&jacobian).map(|(r, j)| r / j).collect();
    Ok(Pushforward { jacobian, density, moved_weights })
}

/// `ρ₁` at the moved nodes by barycentric interpolation on the source grid.
pub fn target_at_moved(src: &Grid, moved: &MovedMesh, rho1: &DensityField) -> Result<Vec<f64>> {
    rho1.check(src)?;
    moved
        .points()
        .par_iter()
        .map(|y| src.locate(y).map(|loc| src.combine(&loc, &rho1.values)))
        .collect()
}

/// Relative L1 distance between the pushforward of `rho0` and `rho1`.
pub fn pushforward_l1(src: &Grid, moved: &MovedMesh, rho0: &DensityField, rho1: &DensityField) -> Result<f64> {
    let push = pushforward_density(src, moved, rho0)?;
    Ok(push.relative_l1(&target_at_moved(src, moved, rho1)?))
}
