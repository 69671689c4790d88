use std::sync::OnceLock;

use nalgebra::Rotation3;
use proptest::prelude::*;

use spheremesh::density::DensityField;
use spheremesh::grid::{gen_cube_sphere, read_grid, write_grid, Grid, MapField, ScalarField};
use spheremesh::mesh_pipeline::{apply_map, pushforward_density, tangling_report};
use spheremesh::oit_solver::{fisher_rao_theta, geodesic_mass_errors};
use spheremesh::operators::OperatorParams;
use spheremesh::poisson::{solve_poisson, PoissonProblem};
use spheremesh::sphere::project_to_sphere;
use spheremesh::stencil::StencilTable;

struct Fixture {
    grid: Grid,
    stencils: StencilTable,
    params: OperatorParams,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let grid = gen_cube_sphere(10);
        let stencils = StencilTable::build(&grid).unwrap();
        let params = OperatorParams::defaults(&grid, &stencils);
        Fixture { grid, stencils, params }
    })
}

/// `exp(a·x + b·y + c·z)`, normalized.
fn smooth_density(g: &Grid, [a, b, c]: [f64; 3]) -> DensityField {
    let raw: Vec<f64> = g.points().iter().map(|p| (a * p.x() + b * p.y() + c * p.z()).exp()).collect();
    DensityField::normalized(g, &raw, 1e-3).unwrap()
}

fn coeffs() -> impl Strategy<Value = [f64; 3]> {
    [-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_files_round_trip(m in 2usize..9) {
        let g = gen_cube_sphere(m);
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        let back = read_grid(buf.as_slice()).unwrap();
        prop_assert_eq!(back.points(), g.points());
        prop_assert_eq!(back.triangles(), g.triangles());
        prop_assert_eq!(back.h(), g.h());
    }

    #[test]
    fn rotations_push_densities_forward_unchanged(yaw in -3.0..3.0f64, pitch in -1.5..1.5f64, roll in -3.0..3.0f64) {
        let f = fixture();
        let r = Rotation3::from_euler_angles(roll, pitch, yaw);
        let images = f.grid.points().iter().map(|p| project_to_sphere(r * p.vec()).unwrap()).collect();
        let map = MapField::new(&f.grid, images).unwrap();
        let moved = apply_map(&f.grid, &map).unwrap();
        prop_assert_eq!(tangling_report(&f.grid, &moved).unwrap().inverted_count, 0);
        let push = pushforward_density(&f.grid, &moved, &DensityField::uniform(&f.grid)).unwrap();
        for j in &push.jacobian {
            prop_assert!((j - 1.0).abs() < 1e-9, "{}", j);
        }
    }

    #[test]
    fn fisher_rao_angle_is_a_metric(a in coeffs(), b in coeffs(), c in coeffs()) {
        let g = &fixture().grid;
        let (fa, fb, fc) = (smooth_density(g, a), smooth_density(g, b), smooth_density(g, c));
        let theta = |x: &DensityField, y: &DensityField| fisher_rao_theta(g, x, y).unwrap().theta;
        let (ab, ba, bc, ac) = (theta(&fa, &fb), theta(&fb, &fa), theta(&fb, &fc), theta(&fa, &fc));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&ab));
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(theta(&fa, &fa), 0.0);
    }

    #[test]
    fn geodesic_keeps_its_mass(a in coeffs(), b in coeffs(), t in 0.0..=1.0f64) {
        let g = &fixture().grid;
        let gd = fisher_rao_theta(g, &smooth_density(g, a), &smooth_density(g, b)).unwrap();
        let (mass, rate) = geodesic_mass_errors(g, &gd, t).unwrap();
        prop_assert!(mass < 1e-10 && rate < 1e-10, "{} {}", mass, rate);
    }

    #[test]
    fn poisson_is_linear(a in coeffs(), scale in -4.0..4.0f64) {
        let f = fixture();
        let g = &f.grid;
        let raw: Vec<f64> = g.points().iter().map(|p| (a[0] * p.x() + a[1] * p.y() + a[2] * p.z()).exp()).collect();
        let mean = g.mean(&raw);
        let base = ScalarField::new(g, raw.iter().map(|v| 0.1 * (v - mean)).collect()).unwrap();
        let scaled = ScalarField::new(g, base.values.iter().map(|v| scale * v).collect()).unwrap();
        let solve = |rhs: &ScalarField| solve_poisson(&PoissonProblem { grid: g, stencils: &f.stencils, rhs, params: f.params }).unwrap().u;
        let (u, v) = (solve(&base), solve(&scaled));
        let size = u.values.iter().fold(1e-12f64, |m, x| m.max(x.abs()));
        for (x, y) in u.values.iter().zip(&v.values) {
            prop_assert!((scale * x - y).abs() <= 1e-7 * size * scale.abs().max(1.0));
        }
    }
}
