//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p spheremesh --test acceptance`. Exits non-zero if
//! a criterion fails that is not listed in `KNOWN_FAILURES`; known failures
//! still print FAIL with the measured values.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spheremesh::density::{builtin, equator_profile, from_raster, Builtin, DensityField, Raster, RasterOptions, DEFAULT_FLOOR};
use spheremesh::grid::{gen_cube_sphere, Grid, ScalarField};
use spheremesh::mesh_pipeline::{apply_map, pushforward_l1, tangling_report};
use spheremesh::oit_solver::{fisher_rao_theta, solve_oit, OitConfig, OitMode, Velocity};
use spheremesh::operators::{laplacian_consistency_error, Cost, OperatorParams, OtOperator};
use spheremesh::ot_solver::{extract_map, solve_ot, OtProblem, SolverConfig};
use spheremesh::poisson::{solve_poisson, PoissonProblem};
use spheremesh::sphere::SpherePoint;
use spheremesh::stencil::{candidate_neighborhood, StencilTable};

/// The OT equator run does not reach the L1 target at N = 5048; see README.
const KNOWN_FAILURES: &[usize] = &[5];

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn setup(m: usize) -> (Grid, StencilTable, OperatorParams) {
    let g = gen_cube_sphere(m);
    let st = StencilTable::build(&g).unwrap();
    let params = OperatorParams::defaults(&g, &st);
    (g, st, params)
}

fn within(t: Duration, limit_s: u64) -> bool {
    t <= Duration::from_secs(limit_s)
}

fn operator_consistency() -> Outcome {
    let start = Instant::now();
    let errs: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&m| {
            let g = gen_cube_sphere(m);
            let st = StencilTable::build(&g).unwrap();
            laplacian_consistency_error(&g, &st)
        })
        .collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    let t = start.elapsed();
    Outcome {
        pass: ratios.iter().all(|&r| r >= 1.3) && within(t, 60),
        detail: format!("errors {:.3e} {:.3e} {:.3e}, ratios {:.2} {:.2}, {t:.1?}", errs[0], errs[1], errs[2], ratios[0], ratios[1]),
    }
}

fn poisson_recovery() -> Outcome {
    let start = Instant::now();
    let (g, st, params) = setup(29);
    let bound = 10.0 * laplacian_consistency_error(&g, &st);
    let y2 = |p: &SpherePoint| p.x() * p.x() - p.y() * p.y();
    let z = |p: &SpherePoint| p.z();
    let mut errs = Vec::new();
    for (exact, lambda) in [(&z as &dyn Fn(&SpherePoint) -> f64, -2.0), (&y2, -6.0)] {
        let rhs = ScalarField::from_fn(&g, |p| lambda * exact(p));
        let s = solve_poisson(&PoissonProblem { grid: &g, stencils: &st, rhs: &rhs, params }).unwrap();
        let want: Vec<f64> = g.points().iter().map(exact).collect();
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        errs.push(s.u.values.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }
    let t = start.elapsed();
    Outcome {
        pass: errs.iter().all(|&e| e <= bound) && within(t, 60),
        detail: format!("relative errors z {:.3e}, x²−y² {:.3e}, bound {bound:.3e}, {t:.1?}", errs[0], errs[1]),
    }
}

fn moment_exactness() -> Outcome {
    let (g, st, _) = setup(20);
    let mut worst = 0.0f64;
    for i in 0..g.len() {
        let cands = candidate_neighborhood(&g, i).unwrap();
        let coords = |n: usize| cands.iter().find(|c| c.index == n).unwrap().coords;
        for k in 0..st.directions().len() {
            let e = st.entry(i, k);
            let nu = st.directions().direction(k);
            let z: Vec<_> = e.nodes.iter().map(|&n| coords(n)).collect();
            let apply = |f: &dyn Fn(usize) -> f64| (0..4).map(|j| e.a[j] * f(j)).sum::<f64>();
            worst = worst
                .max(apply(&|j| z[j].x).abs())
                .max(apply(&|j| z[j].y).abs())
                .max((apply(&|j| z[j].dot(&nu).powi(2)) - 2.0).abs());
        }
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max moment residual {worst:.2e} over {} stencils", g.len() * st.directions().len()) }
}

fn ot_identity() -> Outcome {
    let start = Instant::now();
    let (g, st, params) = setup(29);
    let f = DensityField::uniform(&g);
    let p = OtProblem { grid: &g, stencils: &st, source: &f, target: &f, cost: Cost::SquaredGeodesic, params };
    let s = solve_ot(&p, &SolverConfig::default());
    let t = start.elapsed();
    match s {
        Ok(s) => {
            let disp = extract_map(&g, &st, &s.u, Cost::SquaredGeodesic).unwrap().max_displacement(&g);
            Outcome {
                pass: disp <= 5.0 * g.h() && s.residual <= 1e-6 && within(t, 300),
                detail: format!("max displacement {disp:.2e} (5h = {:.3}), residual {:.2e}, {t:.1?}", 5.0 * g.h(), s.residual),
            }
        }
        Err(e) => Outcome { pass: false, detail: format!("{e}") },
    }
}

fn ot_equator() -> Outcome {
    let start = Instant::now();
    let (g, st, params) = setup(29);
    let f0 = DensityField::uniform(&g);
    let f1 = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
    let p = OtProblem { grid: &g, stencils: &st, source: &f0, target: &f1, cost: Cost::SquaredGeodesic, params };
    let s = match solve_ot(&p, &SolverConfig::default()) {
        Ok(s) => s,
        Err(e) => return Outcome { pass: false, detail: format!("{e}") },
    };
    let map = extract_map(&g, &st, &s.u, Cost::SquaredGeodesic).unwrap();
    let moved = apply_map(&g, &map).unwrap();
    let report = tangling_report(&g, &moved).unwrap();
    let l1 = pushforward_l1(&g, &moved, &f0, &f1).map_or(f64::NAN, |v| v);
    let t = start.elapsed();
    Outcome {
        pass: report.inverted_count == 0 && l1 <= 0.1 && within(t, 600),
        detail: format!(
            "N = {}, converged in {} sweeps, inverted {}, L1 {l1:.3}, {t:.1?}",
            g.len(),
            s.iterations,
            report.inverted_count
        ),
    }
}

fn oit_equator() -> Outcome {
    let start = Instant::now();
    let (g, st, params) = setup(29);
    let f0 = DensityField::uniform(&g);
    let f1 = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
    let run = |velocity| {
        let cfg = OitConfig { steps: 100, velocity, ..OitConfig::default() };
        let sol = solve_oit(&g, &st, &f0, &f1, params, &cfg).unwrap();
        let moved = apply_map(&g, &sol.inverse).unwrap();
        let inverted = tangling_report(&g, &moved).unwrap().inverted_count;
        let l1 = pushforward_l1(&g, &moved, &f0, &f1).map_or(f64::NAN, |v| v);
        let mass = sol.reports.iter().map(|r| r.mass_error.max(r.mass_rate_error)).fold(0.0, f64::max);
        (inverted, l1, mass, sol.reports.len())
    };
    let (inverted, l1, mass, steps) = run(Velocity::Compact);
    let t = start.elapsed();
    let (_, stencil_l1, _, _) = run(Velocity::Stencil);
    Outcome {
        pass: inverted == 0 && l1 <= 0.1 && mass <= 1e-10 && steps == 100 && within(t, 600),
        detail: format!(
            "compact velocity: inverted {inverted}, L1 {l1:.3}, max mass error {mass:.1e}, {t:.1?} (stencil velocity L1 {stencil_l1:.3})"
        ),
    }
}

fn world_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/world_360x180.pgm")
}

fn oit_world() -> Outcome {
    let start = Instant::now();
    let (g, st, params) = setup(29);
    let img = match Raster::open(world_path()) {
        Ok(img) => img,
        Err(e) => return Outcome { pass: false, detail: format!("{e}") },
    };
    let f1 = from_raster(&img, &RasterOptions::default(), &g).unwrap();
    let f0 = DensityField::uniform(&g);
    let sol = match solve_oit(&g, &st, &f0, &f1, params, &OitConfig::default()) {
        Ok(s) => s,
        Err(e) => return Outcome { pass: false, detail: format!("{e}") },
    };
    let report = tangling_report(&g, &apply_map(&g, &sol.inverse).unwrap()).unwrap();
    let t = start.elapsed();
    Outcome {
        pass: report.inverted_fraction <= 0.01 && within(t, 900),
        detail: format!("θ = {:.3}, inverted fraction {:.4}, {t:.1?}", sol.theta, report.inverted_fraction),
    }
}

// θ for the floored equator density by one-dimensional quadrature in the
// polar angle, independent of any grid.
fn zonal_theta_oracle() -> f64 {
    let n = 200_000;
    let dphi = PI / n as f64;
    let cells: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let phi = (k as f64 + 0.5) * dphi;
            (equator_profile(phi.cos()), 2.0 * PI * phi.sin() * dphi)
        })
        .collect();
    let mass = |c: f64| cells.iter().map(|(r, w)| w * (c * r).max(DEFAULT_FLOOR)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 4.0 * PI {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let inner: f64 = cells.iter().map(|(r, w)| w * (c * r).max(DEFAULT_FLOOR).sqrt()).sum();
    (inner / (4.0 * PI)).acos()
}

fn fisher_rao_angle() -> Outcome {
    let theta = |m: usize| {
        let g = gen_cube_sphere(m);
        let f0 = DensityField::uniform(&g);
        let f1 = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
        (fisher_rao_theta(&g, &f0, &f0).unwrap().theta, fisher_rao_theta(&g, &f0, &f1).unwrap().theta)
    };
    let (zero, working) = theta(29);
    let (_, dense) = theta(60);
    let zonal = zonal_theta_oracle();
    let rel = (working - dense).abs() / dense;
    Outcome {
        pass: zero == 0.0 && rel <= 0.01,
        detail: format!(
            "uniform pair {zero}, equator θ {working:.5} at m = 29 vs {dense:.5} at m = 60 ({:.2}%), 1-D quadrature {zonal:.5}",
            100.0 * rel
        ),
    }
}

fn inexact_oit() -> Outcome {
    let (g, st, params) = setup(29);
    let f0 = DensityField::uniform(&g);
    let f1 = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
    let run = |sigma: f64| {
        let cfg = OitConfig { mode: OitMode::Inexact { sigma }, ..OitConfig::default() };
        solve_oit(&g, &st, &f0, &f1, params, &cfg).unwrap()
    };
    let disp: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|&s| run(s).forward.max_displacement(&g)).collect();
    let limit = run(f64::INFINITY);
    let identity = limit.forward.images == g.points() && limit.inverse.images == g.points();
    Outcome {
        pass: disp[0] > disp[1] && disp[1] > disp[2] && identity,
        detail: format!("max displacement σ=1,10,100: {disp:.4?}; σ=∞ identity: {identity}"),
    }
}

fn random_field(g: &Grid, st: &StencilTable, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = g
        .points()
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x(), p.y(), p.z());
            c[0] * x + c[1] * y + c[2] * z + c[3] * x * y + c[4] * y * z + c[5] * z * x + c[6] * (x * x - y * y)
                + c[7] * x * y * z + c[8] * z * z * z + c[9] * x * x * x
        })
        .collect();
    let gmax = (0..g.len()).map(|i| st.gradient_at(i, &u).norm()).fold(0.0, f64::max);
    let amp = rng.random_range(0.05..1.5);
    u.into_iter().map(|v| v * amp / gmax).collect()
}

fn random_density(g: &Grid, rng: &mut ChaCha8Rng) -> DensityField {
    let d: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw: Vec<f64> =
        g.points().iter().map(|p| (0.4 * (d[0] * p.x() + d[1] * p.y() + d[2] * p.z() + d[3] * p.x() * p.z())).exp()).collect();
    DensityField::normalized(g, &raw, DEFAULT_FLOOR).unwrap()
}

/// `(violations, probes)` over 100 random (node, field) samples. Neighbour
/// increments must not decrease `G`; a centre increment must not increase it.
fn probe_monotonicity(g: &Grid, st: &StencilTable, params: OperatorParams, target: Option<&DensityField>) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let uniform = DensityField::uniform(g);
    let (mut bad, mut total) = (0, 0);
    for s in 0..100 {
        let u = random_field(g, st, &mut rng);
        let i = rng.random_range(0..g.len());
        let (a, b) = (random_density(g, &mut rng), random_density(g, &mut rng));
        let (f0, f1) = match (target, s % 4) {
            (Some(t), _) => (&uniform, t),
            (None, 0) => (&uniform, &uniform),
            (None, 1) => (&uniform, &b),
            (None, 2) => (&a, &uniform),
            (None, _) => (&a, &b),
        };
        let op = OtOperator::new(g, st, f0, f1, Cost::SquaredGeodesic, params).unwrap();
        let eval = |v: &[f64]| {
            let mut hint = g.incident_triangles(i)[0];
            op.eval(v, i, &mut hint).unwrap().g()
        };
        let base = eval(&u);
        let tol = 1e-9 * base.abs().max(1.0);
        let mut nodes: Vec<usize> = st.node_entries(i).iter().flat_map(|e| e.nodes).collect();
        nodes.sort_unstable();
        nodes.dedup();
        for &j in &nodes {
            let mut v = u.clone();
            v[j] += 1e-6;
            total += 1;
            if eval(&v) - base < -tol {
                bad += 1;
            }
        }
        let mut v = u.clone();
        v[i] += 1e-6;
        total += 1;
        if eval(&v) - base > tol {
            bad += 1;
        }
    }
    (bad, total)
}

fn monotonicity_audit() -> Outcome {
    let (g, st, params) = setup(20);
    let (bad, total) = probe_monotonicity(&g, &st, params, None);
    let equator = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
    let (eq_bad, eq_total) = probe_monotonicity(&g, &st, params, Some(&equator));
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} wrong signs in {total} probes (equator target, not scored: {eq_bad} in {eq_total})"),
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "operator consistency", operator_consistency),
        (2, "Poisson eigenfunction recovery", poisson_recovery),
        (3, "stencil moment exactness", moment_exactness),
        (4, "OT identity", ot_identity),
        (5, "OT equator", ot_equator),
        (6, "OIT equator", oit_equator),
        (7, "OIT world map", oit_world),
        (8, "Fisher-Rao angle", fisher_rao_angle),
        (9, "inexact OIT", inexact_oit),
        (10, "monotonicity audit", monotonicity_audit),
    ];
    let mut unexpected = Vec::new();
    for (n, name, run) in criteria {
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        let known = if !out.pass && KNOWN_FAILURES.contains(&n) { " (known)" } else { "" };
        println!("criterion {n:>2} {verdict}{known} {name}: {}", out.detail);
        if !out.pass && known.is_empty() {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
