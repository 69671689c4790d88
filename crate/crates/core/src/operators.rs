//! Discrete operators built on the stencil table: Laplacian, gradient, the
//! monotone Monge-Ampère operator for transport on the sphere, the Lipschitz
//! constraint and their combination.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridId, ScalarField};
use crate::sphere::{exp_map, log_map, SpherePoint, TangentVector, Vec2, Vec3};
use crate::stencil::StencilTable;

/// Transport cost `c(x, y) = f(d(x, y))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cost {
    /// `d²/2`
    #[default]
    SquaredGeodesic,
    /// `−2 log(1 − cos d)`
    Logarithmic,
}

impl FromStr for Cost {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sqgeo" | "squared_geodesic" => Ok(Cost::SquaredGeodesic),
            "log" | "logarithmic" => Ok(Cost::Logarithmic),
            other => Err(format!("unknown cost '{other}' (expected sqgeo or log)")),
        }
    }
}

impl std::fmt::Display for Cost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cost::SquaredGeodesic => "sqgeo",
            Cost::Logarithmic => "log",
        })
    }
}

// Below this, trigonometric ratios switch to their Taylor series.
const SERIES_CUTOFF: f64 = 1e-4;

impl Cost {
    /// Radial profile `f(d)`.
    pub fn profile(&self, d: f64) -> f64 {
        match self {
            Cost::SquaredGeodesic => 0.5 * d * d,
            Cost::Logarithmic => -2.0 * (1.0 - d.cos()).ln(),
        }
    }

    /// `f′(d)`.
    pub fn profile_derivative(&self, d: f64) -> f64 {
        match self {
            Cost::SquaredGeodesic => d,
            Cost::Logarithmic => -2.0 / (0.5 * d).tan(),
        }
    }

    /// Transport distance `d` for a gradient of norm `|p|`, from
    /// `|f′(d)| = |p|`. `None` when the profile does not attain `|p|`.
    pub fn transport_distance(&self, pnorm: f64) -> Option<f64> {
        match self {
            Cost::SquaredGeodesic => (pnorm < PI).then_some(pnorm),
            // |f′(d)| = 2 cot(d/2) is unbounded at d = 0, so p = 0 maps to d = π
            Cost::Logarithmic => (pnorm > 0.0 && pnorm.is_finite()).then(|| 2.0 * (2.0 / pnorm).atan()),
        }
    }

    /// The image `T(x, p)` solving `∇ₓc(x, T) = −p`. Squared geodesic cost
    /// moves along `p`; the logarithmic cost moves against it.
    pub fn target_point(&self, x: &SpherePoint, p: &Vec3) -> Result<SpherePoint> {
        let n = p.norm();
        match self {
            Cost::SquaredGeodesic => {
                if n >= PI {
                    return Err(Error::GradientOutOfRange(n));
                }
                exp_map(&TangentVector::new(*x, *p))
            }
            Cost::Logarithmic => {
                let d = self.transport_distance(n).ok_or(Error::NoRadialSolution(n))?;
                exp_map(&TangentVector::new(*x, -*p * (d / n)))
            }
        }
    }

    /// As [`Cost::target_point`], with `p = 0` resolved by continuity
    /// (the antipode for the logarithmic cost).
    fn target_point_or_limit(&self, x: &SpherePoint, p: &Vec3) -> Result<SpherePoint> {
        match self {
            Cost::Logarithmic if p.norm() == 0.0 => Ok(x.antipode()),
            _ => self.target_point(x, p),
        }
    }

    /// Eigenvalues of `D²ₓₓc(x, T(x, p))`: `(f″(d), f′(d)·cot d)`, along and
    /// across `p`.
    pub fn hessian_eigenvalues(&self, pnorm: f64) -> (f64, f64) {
        match self {
            Cost::SquaredGeodesic => {
                let d = pnorm;
                let tangential = if d < SERIES_CUTOFF { 1.0 - d * d / 3.0 } else { d / d.tan() };
                (1.0, tangential)
            }
            Cost::Logarithmic => {
                let Some(d) = self.transport_distance(pnorm) else {
                    return (1.0, 1.0);
                };
                let half = 0.5 * d;
                // f′ cot d = −2 cot(d/2) cot d = −cos d / sin²(d/2)
                (1.0 / half.sin().powi(2), -d.cos() / half.sin().powi(2))
            }
        }
    }

    /// `|det D²ₓᵧc| = |f′ f″| / sin d`, equal to 1 for the identity
    /// (squared geodesic) and the antipodal map (logarithmic).
    pub fn jacobian_factor(&self, pnorm: f64) -> f64 {
        match self {
            Cost::SquaredGeodesic => {
                let d = pnorm;
                if d < SERIES_CUTOFF {
                    1.0 + d * d / 6.0
                } else {
                    d / d.sin()
                }
            }
            Cost::Logarithmic => match self.transport_distance(pnorm) {
                Some(d) => (0.5 * d).sin().powi(-4),
                None => 1.0,
            },
        }
    }
}

/// Tuning constants of the discrete operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorParams {
    /// Weight of the Laplacian added for monotonicity.
    pub eps_g: f64,
    /// Zeroth-order shift making the Poisson operator proper.
    pub eps_h: f64,
    /// Lipschitz bound on the potential.
    pub lipschitz_bound: f64,
    /// Scale `eps_g` per node by `√h·(1 + |∇ʰ log f₁|)`, capped at 1.
    /// Where the target is flat this keeps only the part of the added
    /// Laplacian needed against the cost Hessian's dependence on `p`.
    pub eps_local: bool,
}

impl OperatorParams {
    /// `eps_g = dθ`, `eps_h` = measured consistency error of `Δʰ` on the
    /// `z` eigenfunction, `R = π + 1`, local `eps_g` scaling on.
    pub fn defaults(g: &Grid, st: &StencilTable) -> Self {
        OperatorParams {
            eps_g: st.directions().dtheta(),
            eps_h: laplacian_consistency_error(g, st),
            lipschitz_bound: PI + 1.0,
            eps_local: true,
        }
    }
}

/// `max |Δʰz + 2z|` over the grid.
pub fn laplacian_consistency_error(g: &Grid, st: &StencilTable) -> f64 {
    let z: Vec<f64> = g.points().iter().map(|p| p.z()).collect();
    (0..g.len()).map(|i| (st.laplacian_at(i, &z) + 2.0 * z[i]).abs()).fold(0.0, f64::max)
}

fn check_field(st: &StencilTable, u: &ScalarField) -> Result<()> {
    if u.grid_id != st.grid_id() || u.values.len() != st.len() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn laplacian(st: &StencilTable, u: &ScalarField, i: usize) -> Result<f64> {
    check_field(st, u)?;
    Ok(st.laplacian_at(i, &u.values))
}

/// `Δʰu` at every node.
pub fn laplacian_field(st: &StencilTable, u: &[f64]) -> Vec<f64> {
    (0..st.len()).map(|i| st.laplacian_at(i, u)).collect()
}

/// `∇ʰu` at node `i`, as an ambient tangent vector.
pub fn gradient(g: &Grid, st: &StencilTable, u: &ScalarField, i: usize) -> Result<TangentVector> {
    check_field(st, u)?;
    Ok(gradient_vec(g, st, &u.values, i))
}

pub(crate) fn gradient_vec(g: &Grid, st: &StencilTable, u: &[f64], i: usize) -> TangentVector {
    let c = st.gradient_at(i, u);
    TangentVector { base: *g.point(i), v: g.frame(i).ambient(&c) }
}

/// Ambient `∇ʰu` at every node.
pub fn gradient_field(g: &Grid, st: &StencilTable, u: &[f64]) -> Vec<Vec3> {
    (0..g.len()).map(|i| gradient_vec(g, st, u, i).v).collect()
}

/// Weighted least-squares gradient over the mesh neighbours of each node,
/// fitted in normal coordinates. Its error is `O(h)`, against `O(√h)` for
/// the stencil gradient, at the cost of monotonicity.
#[derive(Debug, Clone)]
pub struct CompactGradient {
    grid_id: GridId,
    // per node: (neighbour, coefficient in the node's frame)
    rows: Vec<Vec<(usize, Vec2)>>,
}

impl CompactGradient {
    pub fn new(g: &Grid) -> Result<Self> {
        let rows = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                let frame = g.frame(i);
                let coords = g
                    .neighbors(i)
                    .iter()
                    .map(|&j| Ok((j, frame.coords(&log_map(x, g.point(j))?.v))))
                    .collect::<Result<Vec<(usize, Vec2)>>>()?;
                let mut normal = nalgebra::Matrix2::zeros();
                for (_, c) in &coords {
                    normal += c * c.transpose() / c.norm_squared();
                }
                let inv = normal.try_inverse().ok_or(Error::SingularMomentSystem)?;
                Ok(coords.into_iter().map(|(j, c)| (j, inv * c / c.norm_squared())).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompactGradient { grid_id: g.id(), rows })
    }

    /// Gradient at node `i` in the node's frame.
    pub fn at(&self, i: usize, u: &[f64]) -> Vec2 {
        self.rows[i].iter().map(|(j, c)| c * (u[*j] - u[i])).sum()
    }

    /// Ambient gradient at every node.
    pub fn field(&self, g: &Grid, u: &[f64]) -> Result<Vec<Vec3>> {
        if g.id() != self.grid_id || u.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        Ok((0..g.len()).into_par_iter().map(|i| g.frame(i).ambient(&self.at(i, u))).collect())
    }
}

/// `Eʰ = |∇ʰu(xᵢ)| − R`.
pub fn lipschitz_constraint(st: &StencilTable, u: &ScalarField, i: usize, bound: f64) -> Result<f64> {
    check_field(st, u)?;
    Ok(st.gradient_at(i, &u.values).norm() - bound)
}

/// `Gʰ = max(Fʰ, Eʰ)`.
pub fn scheme_g(f: f64, e: f64) -> f64 {
    f.max(e)
}

/// The transport operator with its data bound in.
///
/// ```text
/// Fʰ = min over pairs {ν₁, ν₂} of Π max(D_νν u + A_νν(p) + ε_g Δʰu, 0)
///      − f₀(xᵢ)/f₁(T(xᵢ, p)) · (|det D²ₓᵧc|(p) − ε_g Δʰu),     p = ∇ʰu
/// ```
///
/// with `ε_g` taken per node (see [`OperatorParams::eps_local`]) and each
/// factor normalized for the stencil's leak into the orthogonal direction.
///
/// It is non-decreasing in neighbour values and non-increasing in the
/// centre value, so `u ← u + Δt·Gʰ` is a forward parabolic iteration.
#[derive(Debug, Clone)]
pub struct OtOperator<'a> {
    pub grid: &'a Grid,
    pub stencils: &'a StencilTable,
    pub source: &'a DensityField,
    pub target: &'a DensityField,
    pub cost: Cost,
    pub params: OperatorParams,
    /// `eps_g` times the per-node factor.
    pub eps: Vec<f64>,
}

/// Per-node evaluation detail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtEval {
    /// `Fʰ = product − rhs`.
    pub f: f64,
    pub e: f64,
    /// `f₀(xᵢ)/f₁(T)`.
    pub ratio: f64,
    /// Sum over the four stencil points of the weight multiplying the
    /// centre value in the active product; a local stiffness estimate.
    pub diagonal: f64,
}

impl OtEval {
    pub fn g(&self) -> f64 {
        scheme_g(self.f, self.e)
    }

    /// `max(Fʰ/ratio, Eʰ)`: the same zero set as [`OtEval::g`], with the
    /// transport term measured relative to the target density.
    pub fn g_scaled(&self) -> f64 {
        scheme_g(self.f / self.ratio, self.e)
    }
}

impl<'a> OtOperator<'a> {
    pub fn new(
        grid: &'a Grid,
        stencils: &'a StencilTable,
        source: &'a DensityField,
        target: &'a DensityField,
        cost: Cost,
        params: OperatorParams,
    ) -> Result<Self> {
        if stencils.grid_id() != grid.id() {
            return Err(Error::GridMismatch);
        }
        source.check(grid)?;
        target.check(grid)?;
        for d in [source, target] {
            if !(d.min() > 0.0) {
                return Err(Error::NonpositiveDensity(d.min()));
            }
        }
        let eps = local_eps(grid, stencils, target, &params);
        Ok(OtOperator { grid, stencils, source, target, cost, params, eps })
    }

    /// Evaluates `Fʰ`, `Eʰ` at node `i`. `hint` is a triangle near the
    /// previous image of `xᵢ`, updated in place.
    pub fn eval(&self, u: &[f64], i: usize, hint: &mut usize) -> Result<OtEval> {
        let st = self.stencils;
        let x = self.grid.point(i);
        let p = st.gradient_at(i, u);
        let pnorm = p.norm();
        let e = pnorm - self.params.lipschitz_bound;
        let lap = st.laplacian_at(i, u);
        let eps = self.eps[i];

        let (radial, tangential) = self.cost.hessian_eigenvalues(pnorm);
        let phat = if pnorm > 0.0 { p / pnorm } else { Vec2::new(1.0, 0.0) };
        let entries = st.node_entries(i);
        let dirs = st.directions();
        // The stencil for ν measures ∂νν + leak·∂ν⊥ν⊥, so the cost Hessian
        // enters the same way; each factor is then divided by 1 + leak.
        let term = |k: usize| {
            let c = dirs.direction(k).dot(&phat);
            let along = radial * c * c + tangential * (1.0 - c * c);
            let across = radial + tangential - along;
            let e = &entries[k];
            let scale = 1.0 / (1.0 + e.leak);
            (((e.second(i, u) + along + e.leak * across + eps * lap) * scale).max(0.0), scale)
        };
        let mut best = f64::INFINITY;
        let mut best_pair = (0, 0, 0.0, 0.0, 0.0, 0.0);
        for (j, k) in dirs.pairs() {
            let ((tj, sj), (tk, sk)) = (term(j), term(k));
            if tj * tk < best {
                best = tj * tk;
                best_pair = (j, k, tj, tk, sj, sk);
            }
        }

        let image = self.cost.target_point_or_limit(x, &self.grid.frame(i).ambient(&p))?;
        let loc = self.grid.locate_from(&image, *hint)?;
        *hint = loc.triangle;
        let f1 = self.grid.combine(&loc, &self.target.values);
        if !(f1 > 0.0) {
            return Err(Error::NonpositiveDensity(f1));
        }
        let ratio = self.source.values[i] / f1;
        let f = best - ratio * (self.cost.jacobian_factor(pnorm) - eps * lap);

        let (j, k, tj, tk, sj, sk) = best_pair;
        let row = |k: usize| entries[k].a.iter().sum::<f64>();
        let [alpha, beta] = st.trace_weights(i);
        let lap_row = alpha * row(0) + beta * row(dirs.pair_count());
        let diagonal = (row(j) + eps * lap_row) * sj * tk + (row(k) + eps * lap_row) * sk * tj + ratio * eps * lap_row;
        Ok(OtEval { f, e, ratio, diagonal })
    }

    /// `Gʰ` at every node against a frozen `u`.
    pub fn eval_all(&self, u: &[f64], hints: &mut [usize]) -> Result<Vec<OtEval>> {
        hints.par_iter_mut().enumerate().map(|(i, h)| self.eval(u, i, h)).collect()
    }

    /// Starting triangle hints: the triangles containing each node.
    pub fn initial_hints(&self) -> Vec<usize> {
        (0..self.grid.len()).map(|i| self.grid.incident_triangles(i)[0]).collect()
    }
}

// The factor at a node is the largest over it and its mesh neighbours.
fn local_eps(g: &Grid, st: &StencilTable, target: &DensityField, params: &OperatorParams) -> Vec<f64> {
    if !params.eps_local {
        return vec![params.eps_g; g.len()];
    }
    let log_f1: Vec<f64> = target.values.iter().map(|v| v.ln()).collect();
    let r = g.h().sqrt();
    let raw: Vec<f64> = (0..g.len()).map(|i| (r * (1.0 + st.gradient_at(i, &log_f1).norm())).min(1.0)).collect();
    (0..g.len())
        .map(|i| params.eps_g * g.neighbors(i).iter().map(|&j| raw[j]).fold(raw[i], f64::max))
        .collect()
}

/// `Fʰ` at node `i` for transport from `f0` to `f1`.
#[allow(clippy::too_many_arguments)]
pub fn ot_operator(
    g: &Grid,
    st: &StencilTable,
    u: &ScalarField,
    i: usize,
    f0: &DensityField,
    f1: &DensityField,
    cost: Cost,
    params: &OperatorParams,
) -> Result<f64> {
    check_field(st, u)?;
    let op = OtOperator::new(g, st, f0, f1, cost, *params)?;
    let mut hint = g.incident_triangles(i)[0];
    Ok(op.eval(&u.values, i, &mut hint)?.f)
}
