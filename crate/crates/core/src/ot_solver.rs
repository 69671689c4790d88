//! Parabolic iteration for the transport potential and extraction of the
//! transport map.
//!
//! Each sweep evaluates the operator at every node against the frozen
//! iterate and updates `uᵢ ← uᵢ + Δtᵢ·(Gᵢ − c)` with `Gᵢ = max(Fʰᵢ/rᵢ, Eʰᵢ)`,
//! `rᵢ = f₀(xᵢ)/f₁(T)` and `c` the quadrature mean of `G`. Dividing by `rᵢ`
//! keeps the zero set and evens out a ratio that can span several orders of
//! magnitude. On a finite grid the densities are only compatible up to
//! quadrature error, so the scheme drives `G` to a constant rather than to
//! zero; `c` is reported as [`OtSolution::offset`]. The local step is
//! `Δtᵢ = cfl·rᵢ/dᵢ` with `dᵢ` the sensitivity of `Fʰᵢ` to the centre value.

use rayon::prelude::*;

use crate::density::{mass_balance_check, DensityField};
use crate::error::{Error, Result};
use crate::grid::{Grid, MapField, ScalarField};
use crate::operators::{gradient_vec, Cost, OperatorParams, OtEval, OtOperator};
use crate::sphere::{SpherePoint, TangentVector};
use crate::stencil::StencilTable;

/// Allowed `|∫f₀ − ∫f₁|`, relative to `4π`.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `u(x₀) = 0` at the given node.
    FixedPoint(usize),
    /// `∫u = 0`.
    #[default]
    MeanZero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Scale of the local pseudo-time step. Halved automatically when the
    /// residual grows.
    pub cfl: f64,
    /// Target for `max |G − c|`.
    pub tol: f64,
    pub max_iters: usize,
    pub normalization: Normalization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { cfl: 0.5, tol: 1e-6, max_iters: 50_000, normalization: Normalization::MeanZero }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OtProblem<'a> {
    pub grid: &'a Grid,
    pub stencils: &'a StencilTable,
    pub source: &'a DensityField,
    pub target: &'a DensityField,
    pub cost: Cost,
    pub params: OperatorParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtSolution {
    /// The best iterate seen, normalized.
    pub u: ScalarField,
    /// `max |G − c|` at `u`.
    pub residual: f64,
    /// `c`, the quadrature mean of `G` at `u`.
    pub offset: f64,
    pub iterations: usize,
    /// Residual after every sweep.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Final step scale after any halving.
    pub cfl: f64,
}

/// Solves and fails with [`Error::MaxItersExceeded`] if the tolerance is
/// not reached. Use [`solve_ot_report`] to keep the best iterate.
pub fn solve_ot(p: &OtProblem, cfg: &SolverConfig) -> Result<OtSolution> {
    let s = solve_ot_report(p, cfg)?;
    if !s.converged {
        return Err(Error::MaxItersExceeded { iters: s.iterations, residual: s.residual });
    }
    Ok(s)
}

/// Runs the iteration and returns the best iterate whether or not it
/// converged.
pub fn solve_ot_report(p: &OtProblem, cfg: &SolverConfig) -> Result<OtSolution> {
    let g = p.grid;
    if !(cfg.cfl > 0.0) || !(cfg.tol > 0.0) || cfg.max_iters == 0 {
        return Err(Error::DegenerateConfiguration(format!("invalid solver config {cfg:?}")));
    }
    if let Normalization::FixedPoint(i) = cfg.normalization {
        if i >= g.len() {
            return Err(Error::DegenerateConfiguration(format!("fixed node {i} is not on the grid")));
        }
    }
    let op = OtOperator::new(g, p.stencils, p.source, p.target, p.cost, p.params)?;
    let imbalance = mass_balance_check(g, p.source, p.target);
    if imbalance > MASS_TOLERANCE * 4.0 * std::f64::consts::PI {
        return Err(Error::MassImbalance(imbalance));
    }

    let n = g.len();
    let mut u = vec![0.0; n];
    let mut hints = op.initial_hints();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0.0, u.clone());
    let mut cfl = cfg.cfl;
    let mut prev = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let evals = op.eval_all(&u, &mut hints)?;
        let gvals: Vec<f64> = evals.iter().map(OtEval::g_scaled).collect();
        let c = g.mean(&gvals);
        let res = gvals.iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res < best.0 {
            best = (res, c, u.clone());
        }
        if res <= cfg.tol {
            converged = true;
            break;
        }
        if res > 2.0 * prev.min(best.0 * 10.0) {
            cfl *= 0.5;
            u.clone_from(&best.2);
            prev = best.0;
            continue;
        }
        prev = res;
        u.par_iter_mut().zip(evals.par_iter().zip(&gvals)).for_each(|(ui, (e, gi))| {
            *ui += cfl * e.ratio / e.diagonal.max(1.0) * (gi - c);
        });
        let m = g.mean(&u);
        u.iter_mut().for_each(|v| *v -= m);
    }

    let (residual, offset, mut u) = best;
    let shift = match cfg.normalization {
        Normalization::MeanZero => g.mean(&u),
        Normalization::FixedPoint(i) => u[i],
    };
    u.iter_mut().for_each(|v| *v -= shift);
    Ok(OtSolution {
        u: ScalarField { grid_id: g.id(), values: u },
        residual,
        offset,
        iterations: history.len(),
        history,
        converged,
        cfl,
    })
}

/// The point `T(x, p)` with `∇ₓc(x, T) = −p`.
pub fn extract_point(x: &SpherePoint, p: &TangentVector, cost: Cost) -> Result<SpherePoint> {
    cost.target_point(x, &p.v)
}

/// `T(xᵢ, ∇ʰu(xᵢ))` at every node.
pub fn extract_map(g: &Grid, st: &StencilTable, u: &ScalarField, cost: Cost) -> Result<MapField> {
    u.check(g)?;
    if st.grid_id() != g.id() {
        return Err(Error::GridMismatch);
    }
    let images = (0..g.len())
        .into_par_iter()
        .map(|i| extract_point(g.point(i), &gradient_vec(g, st, &u.values, i), cost))
        .collect::<Result<Vec<_>>>()?;
    MapField::new(g, images)
}
