//! Optimal information transport: follow the Fisher-Rao geodesic between two
//! densities and integrate the gradient flow that realizes it.
//!
//! The square-root densities `w₀ = √ρ₀`, `w₁ = √ρ₁` span the geodesic
//! `μ(t) = g(t)²` with `g(t) = a(t)w₀ + b(t)w₁`. Each step solves
//! `Δʰf = ν(S(xᵢ))` for `ν = μ̇/μ` and advances the forward samples `T`
//! along `∇ʰf` and the inverse samples `S` against it. At the end `S`
//! carries `ρ₀` to `ρ₁`, and `T` is its inverse.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::grid::{Grid, MapField, ScalarField};
use crate::operators::{gradient_field, CompactGradient, OperatorParams};
use crate::ot_solver::MASS_TOLERANCE;
use crate::poisson::PoissonSolver;
use crate::sphere::{geodesic_distance, project_to_sphere, SpherePoint};
use crate::stencil::StencilTable;

/// Below this angle the geodesic is treated as stationary.
pub const STATIONARY_THETA: f64 = 1e-10;

pub const DEFAULT_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicData {
    pub theta: f64,
    pub w0: ScalarField,
    pub w1: ScalarField,
}

/// `θ = arccos(∫√ρ₀√ρ₁ / 4π)` together with the square roots.
pub fn fisher_rao_theta(g: &Grid, rho0: &DensityField, rho1: &DensityField) -> Result<GeodesicData> {
    rho0.check(g)?;
    rho1.check(g)?;
    let volume = 4.0 * PI;
    for d in [rho0, rho1] {
        if !(d.min() > 0.0) {
            return Err(Error::NonpositiveDensity(d.min()));
        }
        let imbalance = (g.integrate(&d.values) - volume).abs();
        if imbalance > MASS_TOLERANCE * volume {
            return Err(Error::MassImbalance(imbalance));
        }
    }
    let sqrt = |d: &DensityField| ScalarField { grid_id: g.id(), values: d.values.iter().map(|v| v.sqrt()).collect() };
    let (w0, w1) = (sqrt(rho0), sqrt(rho1));
    // ∫(w₀ − w₁)² = 2·4π(1 − cos θ) for unit masses; the half-angle form
    // keeps full precision for small θ and is exactly zero for ρ₀ = ρ₁.
    let diff: Vec<f64> = w0.values.iter().zip(&w1.values).map(|(a, b)| (a - b) * (a - b)).collect();
    let theta = 2.0 * (0.5 * (g.integrate(&diff) / volume).sqrt()).min(1.0).asin();
    Ok(GeodesicData { theta, w0, w1 })
}

impl GeodesicData {
    fn is_stationary(&self) -> bool {
        self.theta < STATIONARY_THETA
    }

    /// `(a, b, ȧ, ḃ)` with `g = a·w₀ + b·w₁`.
    fn coefficients(&self, t: f64) -> (f64, f64, f64, f64) {
        let th = self.theta;
        if self.is_stationary() {
            return (1.0 - t, t, 0.0, 0.0);
        }
        let s = th.sin();
        (((1.0 - t) * th).sin() / s, (t * th).sin() / s, -th * ((1.0 - t) * th).cos() / s, th * (t * th).cos() / s)
    }

    fn root(&self, t: f64) -> Result<Vec<f64>> {
        let (a, b, _, _) = self.coefficients(t);
        let g: Vec<f64> = self.w0.values.iter().zip(&self.w1.values).map(|(w0, w1)| a * w0 + b * w1).collect();
        if g.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::GeodesicDegenerate);
        }
        Ok(g)
    }

    /// The density `μ(t) = g(t)²` on the geodesic.
    pub fn density(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.root(t)?.into_iter().map(|v| v * v).collect())
    }

    /// `ν(t) = μ̇/μ = 2ġ/g`; zero for a stationary geodesic.
    pub fn log_derivative(&self, t: f64) -> Result<ScalarField> {
        let grid_id = self.w0.grid_id;
        if self.is_stationary() {
            return Ok(ScalarField { grid_id, values: vec![0.0; self.w0.values.len()] });
        }
        let (_, _, da, db) = self.coefficients(t);
        let g = self.root(t)?;
        let values =
            self.w0.values.iter().zip(&self.w1.values).zip(&g).map(|((w0, w1), gi)| 2.0 * (da * w0 + db * w1) / gi).collect();
        Ok(ScalarField { grid_id, values })
    }
}

pub fn geodesic_log_derivative(gd: &GeodesicData, t: f64) -> Result<ScalarField> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::DegenerateConfiguration(format!("geodesic time {t} outside [0, 1]")));
    }
    gd.log_derivative(t)
}

/// `(|∫μ(t) − 4π| / 4π, |∫ν(t)μ(t)| / 4π)`: mass and its rate along the
/// geodesic, both zero up to quadrature error.
pub fn geodesic_mass_errors(g: &Grid, gd: &GeodesicData, t: f64) -> Result<(f64, f64)> {
    let mu = gd.density(t)?;
    let nu = gd.log_derivative(t)?;
    let rate: Vec<f64> = mu.iter().zip(&nu.values).map(|(m, n)| m * n).collect();
    let volume = 4.0 * PI;
    Ok(((g.integrate(&mu) - volume).abs() / volume, g.integrate(&rate).abs() / volume))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OitState {
    pub t: f64,
    /// `T`, flowing along `∇f`.
    pub forward: MapField,
    /// `S`, the inverse of `T`.
    pub inverse: MapField,
    pub step: usize,
}

impl OitState {
    pub fn identity(g: &Grid) -> Self {
        OitState { t: 0.0, forward: MapField::identity(g), inverse: MapField::identity(g), step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Time at the end of the step.
    pub t: f64,
    pub mass_error: f64,
    pub mass_rate_error: f64,
    /// `max |S(T(xᵢ)) − xᵢ|` (geodesic distance).
    pub composition_error: f64,
    pub max_speed: f64,
    pub poisson_iterations: usize,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OitMode {
    /// Integrate to `t = 1`.
    #[default]
    Exact,
    /// Integrate to `s = 1/(1 + σ)`; `σ = ∞` is the identity.
    Inexact { sigma: f64 },
}

impl OitMode {
    pub fn end_time(&self) -> Result<f64> {
        match *self {
            OitMode::Exact => Ok(1.0),
            OitMode::Inexact { sigma } if sigma >= 0.0 => Ok(1.0 / (1.0 + sigma)),
            OitMode::Inexact { sigma } => Err(Error::DegenerateConfiguration(format!("sigma must be >= 0, got {sigma}"))),
        }
    }
}

/// How `∇ʰf` is formed for the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Velocity {
    /// The coordinate-direction stencil derivatives. Smooths over the
    /// stencil radius, which keeps the flow untangled on discontinuous
    /// targets.
    #[default]
    Stencil,
    /// Least squares over the mesh neighbours. More accurate on smooth
    /// targets; can tangle on discontinuous ones.
    Compact,
}

impl std::str::FromStr for Velocity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "stencil" => Ok(Velocity::Stencil),
            "compact" => Ok(Velocity::Compact),
            other => Err(format!("unknown velocity '{other}' (expected stencil or compact)")),
        }
    }
}

impl std::fmt::Display for Velocity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Velocity::Stencil => "stencil",
            Velocity::Compact => "compact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OitConfig {
    pub steps: usize,
    pub mode: OitMode,
    pub velocity: Velocity,
    /// Largest composition error tolerated at any step, in radians.
    pub composition_limit: f64,
}

impl Default for OitConfig {
    fn default() -> Self {
        OitConfig { steps: DEFAULT_STEPS, mode: OitMode::Exact, velocity: Velocity::Stencil, composition_limit: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OitSolution {
    pub forward: MapField,
    pub inverse: MapField,
    pub theta: f64,
    pub t_end: f64,
    pub reports: Vec<StepReport>,
}

/// Grid, stencils and an assembled Poisson solver, reused across steps.
#[derive(Debug, Clone)]
pub struct OitStepper<'a> {
    grid: &'a Grid,
    stencils: &'a StencilTable,
    poisson: PoissonSolver<'a>,
    compact: Option<CompactGradient>,
    composition_limit: f64,
}

impl<'a> OitStepper<'a> {
    pub fn new(
        grid: &'a Grid,
        stencils: &'a StencilTable,
        params: OperatorParams,
        velocity: Velocity,
        composition_limit: f64,
    ) -> Result<Self> {
        let compact = match velocity {
            Velocity::Compact => Some(CompactGradient::new(grid)?),
            Velocity::Stencil => None,
        };
        Ok(OitStepper { grid, stencils, poisson: PoissonSolver::new(grid, stencils, params)?, compact, composition_limit })
    }

    /// One explicit Euler step from `state.t` to `state.t + dt`. `guess`
    /// warm-starts the Poisson solve and receives its solution.
    pub fn step(&self, state: &OitState, gd: &GeodesicData, dt: f64, guess: &mut Vec<f64>) -> Result<(OitState, StepReport)> {
        let g = self.grid;
        state.forward.check(g)?;
        state.inverse.check(g)?;
        if gd.w0.grid_id != g.id() {
            return Err(Error::GridMismatch);
        }
        let nu = gd.log_derivative(state.t)?;
        let rhs = state
            .inverse
            .images
            .par_iter()
            .map(|y| g.interp_scalar(&nu, y))
            .collect::<Result<Vec<f64>>>()?;
        let warm = (guess.len() == g.len()).then_some(guess.as_slice());
        let sol = self.poisson.solve(&rhs, warm)?;
        let grad = match &self.compact {
            Some(cg) => cg.field(g, &sol.u.values)?,
            None => gradient_field(g, self.stencils, &sol.u.values),
        };
        let max_speed = grad.iter().map(|v| v.norm()).fold(0.0, f64::max);

        let forward = state
            .forward
            .images
            .par_iter()
            .map(|y| {
                let v = g.interp_vector(&grad, y)?;
                project_to_sphere(y.vec() + v.v * dt)
            })
            .collect::<Result<Vec<SpherePoint>>>()?;
        let inverse = g
            .points()
            .par_iter()
            .zip(&grad)
            .map(|(x, v)| g.interp_map(&state.inverse, &project_to_sphere(x.vec() - v * dt)?))
            .collect::<Result<Vec<SpherePoint>>>()?;
        let next = OitState {
            t: state.t + dt,
            forward: MapField::new(g, forward)?,
            inverse: MapField::new(g, inverse)?,
            step: state.step + 1,
        };

        let composition_error = composition_error(g, &next.forward, &next.inverse)?;
        if composition_error > self.composition_limit {
            return Err(Error::TangledIntermediateMap(composition_error, self.composition_limit));
        }
        let (mass_error, mass_rate_error) = geodesic_mass_errors(g, gd, next.t.min(1.0))?;
        *guess = sol.u.values;
        let report = StepReport {
            t: next.t,
            mass_error,
            mass_rate_error,
            composition_error,
            max_speed,
            poisson_iterations: sol.iterations,
            used_fallback: sol.used_fallback,
        };
        Ok((next, report))
    }
}

/// `max d(S(T(xᵢ)), xᵢ)` with `S` evaluated off-node by interpolation.
pub fn composition_error(g: &Grid, forward: &MapField, inverse: &MapField) -> Result<f64> {
    let errs = g
        .points()
        .par_iter()
        .zip(&forward.images)
        .map(|(x, y)| Ok(geodesic_distance(x, &g.interp_map(inverse, y)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// One step with a freshly assembled Poisson solver.
pub fn oit_step(
    state: &OitState,
    gd: &GeodesicData,
    g: &Grid,
    st: &StencilTable,
    params: OperatorParams,
    velocity: Velocity,
    dt: f64,
) -> Result<OitState> {
    let stepper = OitStepper::new(g, st, params, velocity, f64::INFINITY)?;
    Ok(stepper.step(state, gd, dt, &mut Vec::new())?.0)
}

pub fn solve_oit(
    g: &Grid,
    st: &StencilTable,
    rho0: &DensityField,
    rho1: &DensityField,
    params: OperatorParams,
    cfg: &OitConfig,
) -> Result<OitSolution> {
    if cfg.steps == 0 {
        return Err(Error::DegenerateConfiguration("steps must be at least 1".into()));
    }
    if st.grid_id() != g.id() {
        return Err(Error::GridMismatch);
    }
    let gd = fisher_rao_theta(g, rho0, rho1)?;
    let t_end = cfg.mode.end_time()?;
    let mut state = OitState::identity(g);
    let mut reports = Vec::with_capacity(cfg.steps);
    if t_end > 0.0 && !gd.is_stationary() {
        let stepper = OitStepper::new(g, st, params, cfg.velocity, cfg.composition_limit)?;
        let dt = t_end / cfg.steps as f64;
        let mut guess = Vec::new();
        for n in 0..cfg.steps {
            let (mut next, report) = stepper.step(&state, &gd, dt, &mut guess)?;
            // avoid drift of t from repeated addition
            next.t = t_end * (n + 1) as f64 / cfg.steps as f64;
            reports.push(report);
            state = next;
        }
    }
    Ok(OitSolution { forward: state.forward, inverse: state.inverse, theta: gd.theta, t_end, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{builtin, Builtin, DEFAULT_FLOOR};
    use crate::grid::gen_cube_sphere;
    use crate::poisson::{solve_poisson, PoissonProblem};

    fn setup(m: usize) -> (Grid, StencilTable, OperatorParams) {
        let g = gen_cube_sphere(m);
        let st = StencilTable::build(&g).unwrap();
        let params = OperatorParams::defaults(&g, &st);
        (g, st, params)
    }

    fn bumpy(g: &Grid) -> DensityField {
        let raw: Vec<f64> = g.points().iter().map(|p| 1.0 + 0.5 * p.z() + 0.3 * p.x() * p.y()).collect();
        DensityField::normalized(g, &raw, DEFAULT_FLOOR).unwrap()
    }

    #[test]
    fn theta_of_equal_densities_is_zero() {
        let (g, _, _) = setup(8);
        let f = DensityField::uniform(&g);
        assert_eq!(fisher_rao_theta(&g, &f, &f).unwrap().theta, 0.0);
        let b = bumpy(&g);
        assert_eq!(fisher_rao_theta(&g, &b, &b).unwrap().theta, 0.0);
        // agrees with the arccos form away from zero
        let gd = fisher_rao_theta(&g, &f, &b).unwrap();
        let inner: Vec<f64> = gd.w0.values.iter().zip(&gd.w1.values).map(|(a, b)| a * b).collect();
        assert!((gd.theta - (g.integrate(&inner) / (4.0 * PI)).acos()).abs() < 1e-7);
    }

    #[test]
    fn theta_rejects_bad_densities() {
        let (g, _, _) = setup(6);
        let f = DensityField::uniform(&g);
        let heavy = DensityField::from_values(&g, vec![2.0; g.len()]).unwrap();
        assert!(matches!(fisher_rao_theta(&g, &f, &heavy), Err(Error::MassImbalance(_))));
    }

    #[test]
    fn log_derivative_at_zero_matches_closed_form() {
        let (g, _, _) = setup(8);
        let gd = fisher_rao_theta(&g, &DensityField::uniform(&g), &bumpy(&g)).unwrap();
        let th = gd.theta;
        assert!(th > 0.01);
        let nu = geodesic_log_derivative(&gd, 0.0).unwrap();
        for ((n, w0), w1) in nu.values.iter().zip(&gd.w0.values).zip(&gd.w1.values) {
            let want = 2.0 * th * (w1 / w0 - th.cos()) / th.sin();
            assert!((n - want).abs() < 1e-12, "{n} {want}");
        }
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        let (g, _, _) = setup(8);
        let gd = fisher_rao_theta(&g, &bumpy(&g), &builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap()).unwrap();
        let (t, dt) = (0.4, 1e-6);
        let nu = gd.log_derivative(t).unwrap();
        let (lo, hi, mid) = (gd.density(t - dt).unwrap(), gd.density(t + dt).unwrap(), gd.density(t).unwrap());
        for i in 0..g.len() {
            let fd = (hi[i] - lo[i]) / (2.0 * dt) / mid[i];
            assert!((fd - nu.values[i]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn stationary_geodesic_has_zero_speed() {
        let (g, _, _) = setup(6);
        let f = DensityField::uniform(&g);
        let gd = fisher_rao_theta(&g, &f, &f).unwrap();
        assert!(gd.log_derivative(0.3).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_is_conserved_along_the_geodesic() {
        let (g, _, _) = setup(10);
        let gd = fisher_rao_theta(&g, &DensityField::uniform(&g), &builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap()).unwrap();
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let (m, r) = geodesic_mass_errors(&g, &gd, t).unwrap();
            assert!(m < 1e-12 && r < 1e-10, "t={t}: {m} {r}");
        }
    }

    #[test]
    fn equal_densities_give_the_identity() {
        let (g, st, params) = setup(8);
        let b = bumpy(&g);
        let sol = solve_oit(&g, &st, &b, &b, params, &OitConfig { steps: 5, ..OitConfig::default() }).unwrap();
        assert_eq!(sol.forward, MapField::identity(&g));
        assert_eq!(sol.inverse, MapField::identity(&g));
    }

    #[test]
    fn infinite_sigma_is_the_identity() {
        let (g, st, params) = setup(8);
        let cfg = OitConfig { mode: OitMode::Inexact { sigma: f64::INFINITY }, ..OitConfig::default() };
        let sol = solve_oit(&g, &st, &DensityField::uniform(&g), &bumpy(&g), params, &cfg).unwrap();
        assert_eq!(sol.t_end, 0.0);
        assert_eq!(sol.forward, MapField::identity(&g));
        assert!(matches!(OitMode::Inexact { sigma: -1.0 }.end_time(), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn first_step_matches_hand_assembly() {
        let (g, st, params) = setup(10);
        let gd = fisher_rao_theta(&g, &DensityField::uniform(&g), &bumpy(&g)).unwrap();
        let dt = 0.01;
        let next = oit_step(&OitState::identity(&g), &gd, &g, &st, params, Velocity::Stencil, dt).unwrap();
        assert_eq!(next.step, 1);
        let nu = gd.log_derivative(0.0).unwrap();
        let f = solve_poisson(&PoissonProblem { grid: &g, stencils: &st, rhs: &nu, params }).unwrap();
        let grad = gradient_field(&g, &st, &f.u.values);
        for (i, w) in grad.iter().enumerate() {
            let want = project_to_sphere(g.point(i).vec() + w * dt).unwrap();
            assert!(geodesic_distance(&want, &next.forward.images[i]) < 1e-9);
            let back = project_to_sphere(g.point(i).vec() - w * dt).unwrap();
            assert!(geodesic_distance(&back, &next.inverse.images[i]) < 1e-9);
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let (g, st, params) = setup(12);
        for velocity in [Velocity::Stencil, Velocity::Compact] {
            let cfg = OitConfig { steps: 20, velocity, ..OitConfig::default() };
            let sol = solve_oit(&g, &st, &DensityField::uniform(&g), &bumpy(&g), params, &cfg).unwrap();
            assert_eq!(sol.reports.len(), 20);
            let last = sol.reports.last().unwrap();
            assert_eq!(last.t, 1.0);
            assert!(last.composition_error < 2.0 * (g.h() + 0.05), "{velocity}: {}", last.composition_error);
            assert!(sol.reports.iter().all(|r| r.mass_error < 1e-12));
        }
    }

    #[test]
    fn composition_limit_is_enforced() {
        let (g, st, params) = setup(10);
        let cfg = OitConfig { steps: 4, composition_limit: 1e-9, ..OitConfig::default() };
        let r = solve_oit(&g, &st, &DensityField::uniform(&g), &bumpy(&g), params, &cfg);
        assert!(matches!(r, Err(Error::TangledIntermediateMap(_, _))));
    }

    #[test]
    fn smaller_end_time_moves_less() {
        let (g, st, params) = setup(10);
        let disp = |sigma: f64| {
            let cfg = OitConfig { steps: 10, mode: OitMode::Inexact { sigma }, ..OitConfig::default() };
            let sol = solve_oit(&g, &st, &DensityField::uniform(&g), &bumpy(&g), params, &cfg).unwrap();
            sol.forward.max_displacement(&g)
        };
        let (a, b, c) = (disp(0.0), disp(1.0), disp(9.0));
        assert!(a > b && b > c && c > 0.0, "{a} {b} {c}");
    }
}
