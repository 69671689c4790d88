//! Poisson problems `Δu = f` on the sphere.
//!
//! The discrete system is `Δʰu − εʰu = f` with a small `εʰ > 0`, which makes
//! the operator proper and the solution unique. The right side is projected
//! to quadrature mean zero first and the solution is returned with mean
//! zero. If the solution breaks the Lipschitz bound `|∇ʰu| < R`, the
//! max-form problem `max(−Δʰu + f, |∇ʰu| − R) + εʰu = 0` is solved instead
//! by parabolic iteration.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::{bicgstab, CsrMatrix};
use crate::operators::OperatorParams;
use crate::stencil::StencilTable;

/// Residual tolerance of the linear solve, relative to `max(1, ‖f‖∞)`.
pub const LINEAR_TOL: f64 = 1e-10;
const MAX_LINEAR_ITERS: usize = 5000;
const MAX_FALLBACK_ITERS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct PoissonProblem<'a> {
    pub grid: &'a Grid,
    pub stencils: &'a StencilTable,
    pub rhs: &'a ScalarField,
    pub params: OperatorParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    /// Mean-zero solution.
    pub u: ScalarField,
    /// `‖Δʰu − εʰu − f‖∞` for the solution before the mean shift (for the
    /// fallback path, the max-form residual).
    pub residual: f64,
    pub iterations: usize,
    pub used_fallback: bool,
    pub max_gradient: f64,
}

pub fn solve_poisson(p: &PoissonProblem) -> Result<PoissonSolution> {
    p.rhs.check(p.grid)?;
    PoissonSolver::new(p.grid, p.stencils, p.params)?.solve(&p.rhs.values, None)
}

/// Reusable solver: the matrix is assembled once per grid.
#[derive(Debug, Clone)]
pub struct PoissonSolver<'a> {
    grid: &'a Grid,
    stencils: &'a StencilTable,
    params: OperatorParams,
    matrix: CsrMatrix,
}

impl<'a> PoissonSolver<'a> {
    pub fn new(grid: &'a Grid, stencils: &'a StencilTable, params: OperatorParams) -> Result<Self> {
        if stencils.grid_id() != grid.id() {
            return Err(Error::GridMismatch);
        }
        if !(params.eps_h > 0.0) {
            return Err(Error::LinearSolveFailure(format!("eps_h must be positive, got {}", params.eps_h)));
        }
        let matrix = assemble(stencils, params.eps_h);
        Ok(PoissonSolver { grid, stencils, params, matrix })
    }

    /// Solves for `rhs` (projected to mean zero here), optionally warm
    /// started from `guess`.
    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<PoissonSolution> {
        let g = self.grid;
        if rhs.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        let mean = g.mean(rhs);
        let f: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
        let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut u = guess.map_or_else(|| vec![0.0; g.len()], <[f64]>::to_vec);
        if u.len() != g.len() {
            return Err(Error::GridMismatch);
        }
        let stats = bicgstab(&self.matrix, &f, &mut u, LINEAR_TOL * scale, MAX_LINEAR_ITERS)?;
        let max_gradient = self.max_gradient(&u);
        if max_gradient < self.params.lipschitz_bound {
            return Ok(self.finish(u, stats.residual, stats.iterations, false, max_gradient));
        }
        let (u, residual, iterations) = self.fallback(&f, u)?;
        let max_gradient = self.max_gradient(&u);
        Ok(self.finish(u, residual, iterations, true, max_gradient))
    }

    fn finish(&self, mut u: Vec<f64>, residual: f64, iterations: usize, used_fallback: bool, max_gradient: f64) -> PoissonSolution {
        let m = self.grid.mean(&u);
        u.iter_mut().for_each(|v| *v -= m);
        PoissonSolution { u: ScalarField { grid_id: self.grid.id(), values: u }, residual, iterations, used_fallback, max_gradient }
    }

    fn max_gradient(&self, u: &[f64]) -> f64 {
        (0..u.len()).map(|i| self.stencils.gradient_at(i, u).norm()).fold(0.0, f64::max)
    }

    /// Explicit iteration `u ← u − Δt·G̃(u)` with
    /// `G̃ = max(−Δʰu + f, |∇ʰu| − R) + εʰu`.
    fn fallback(&self, f: &[f64], mut u: Vec<f64>) -> Result<(Vec<f64>, f64, usize)> {
        let st = self.stencils;
        let eps = self.params.eps_h;
        let bound = self.params.lipschitz_bound;
        let diag = self.matrix.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let dt = 0.9 / diag;
        let tol = LINEAR_TOL.sqrt() * f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut res = f64::INFINITY;
        for it in 1..=MAX_FALLBACK_ITERS {
            let g: Vec<f64> = (0..u.len())
                .into_par_iter()
                .map(|i| {
                    let pde = -st.laplacian_at(i, &u) + f[i];
                    let lip = st.gradient_at(i, &u).norm() - bound;
                    pde.max(lip) + eps * u[i]
                })
                .collect();
            res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if res <= tol {
                return Ok((u, res, it));
            }
            if !res.is_finite() {
                break;
            }
            u.iter_mut().zip(&g).for_each(|(v, gi)| *v -= dt * gi);
        }
        Err(Error::FallbackDidNotConverge(res))
    }
}

// Row i of Δʰ − εʰI.
fn assemble(st: &StencilTable, eps: f64) -> CsrMatrix {
    let k = st.directions().pair_count();
    let rows = (0..st.len())
        .map(|i| {
            let mut row = Vec::with_capacity(9);
            let mut center = -eps;
            for (e, w) in [st.entry(i, 0), st.entry(i, k)].into_iter().zip(st.trace_weights(i)) {
                for j in 0..4 {
                    row.push((e.nodes[j], w * e.a[j]));
                    center -= w * e.a[j];
                }
            }
            row.push((i, center));
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}
