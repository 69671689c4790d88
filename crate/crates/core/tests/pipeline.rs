use spheremesh::density::{builtin, from_raster, Builtin, DensityField, Raster, RasterOptions, DEFAULT_FLOOR};
use spheremesh::grid::{gen_cube_sphere, Grid, MapField};
use spheremesh::mesh_pipeline::{apply_map, pushforward_l1, tangling_report};
use spheremesh::oit_solver::{composition_error, solve_oit, OitConfig, Velocity};
use spheremesh::operators::{Cost, OperatorParams};
use spheremesh::ot_solver::{extract_map, solve_ot, OtProblem, SolverConfig};
use spheremesh::sphere::geodesic_distance;
use spheremesh::stencil::StencilTable;

fn setup(m: usize) -> (Grid, StencilTable, OperatorParams) {
    let g = gen_cube_sphere(m);
    let st = StencilTable::build(&g).unwrap();
    let params = OperatorParams::defaults(&g, &st);
    (g, st, params)
}

fn tilted(g: &Grid) -> DensityField {
    let raw: Vec<f64> = g.points().iter().map(|p| (0.8 * p.x() - 0.5 * p.z()).exp()).collect();
    DensityField::normalized(g, &raw, DEFAULT_FLOOR).unwrap()
}

#[test]
fn ot_moves_the_mesh_toward_a_smooth_target() {
    let (g, st, params) = setup(12);
    let f0 = DensityField::uniform(&g);
    let f1 = tilted(&g);
    let p = OtProblem { grid: &g, stencils: &st, source: &f0, target: &f1, cost: Cost::SquaredGeodesic, params };
    let s = solve_ot(&p, &SolverConfig::default()).unwrap();
    let map = extract_map(&g, &st, &s.u, Cost::SquaredGeodesic).unwrap();
    let moved = apply_map(&g, &map).unwrap();
    assert_eq!(tangling_report(&g, &moved).unwrap().inverted_count, 0);
    let identity = apply_map(&g, &MapField::identity(&g)).unwrap();
    let before = pushforward_l1(&g, &identity, &f0, &f1).unwrap();
    let after = pushforward_l1(&g, &moved, &f0, &f1).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn oit_maps_are_inverse_to_each_other() {
    let (g, st, params) = setup(12);
    let f0 = DensityField::uniform(&g);
    let f1 = builtin(Builtin::Equator, &g, DEFAULT_FLOOR).unwrap();
    for velocity in [Velocity::Stencil, Velocity::Compact] {
        let cfg = OitConfig { steps: 40, velocity, ..OitConfig::default() };
        let sol = solve_oit(&g, &st, &f0, &f1, params, &cfg).unwrap();
        assert_eq!(sol.reports.len(), 40);
        assert!(composition_error(&g, &sol.forward, &sol.inverse).unwrap() <= cfg.composition_limit);
        // S is steep where T compresses, so check T after S.
        let back: Vec<f64> = (0..g.len())
            .map(|i| geodesic_distance(&g.interp_map(&sol.forward, &sol.inverse.images[i]).unwrap(), g.point(i)))
            .collect();
        let mean = back.iter().sum::<f64>() / back.len() as f64;
        let max = back.iter().copied().fold(0.0, f64::max);
        assert!(mean < 0.15 * g.h() && max < g.h(), "{velocity}: mean {mean}, max {max}");
        let moved = apply_map(&g, &sol.inverse).unwrap();
        assert_eq!(tangling_report(&g, &moved).unwrap().inverted_count, 0);
        let identity = apply_map(&g, &MapField::identity(&g)).unwrap();
        let before = pushforward_l1(&g, &identity, &f0, &f1).unwrap();
        let after = pushforward_l1(&g, &moved, &f0, &f1).unwrap();
        assert!(after < 0.5 * before, "{velocity}: {before} -> {after}");
    }
}

#[test]
fn raster_targets_drive_oit() {
    // Bright band around the equator on a 8×4 image.
    let mut bytes = b"P5\n8 4\n255\n".to_vec();
    for row in 0..4 {
        bytes.extend(std::iter::repeat_n(if row == 1 || row == 2 { 255 } else { 20 }, 8));
    }
    let img = Raster::parse_pgm(&bytes).unwrap();
    let (g, st, params) = setup(8);
    let f1 = from_raster(&img, &RasterOptions::default(), &g).unwrap();
    let (eq, pole) = (f1.values.iter().zip(g.points()).filter(|(_, p)| p.z().abs() < 0.2).count(), f1.values.len());
    assert!(eq > 0 && eq < pole);
    let f0 = DensityField::uniform(&g);
    let sol = solve_oit(&g, &st, &f0, &f1, params, &OitConfig::default()).unwrap();
    assert!(sol.theta > 0.0);
    let report = tangling_report(&g, &apply_map(&g, &sol.inverse).unwrap()).unwrap();
    assert_eq!(report.inverted_count, 0);
}
