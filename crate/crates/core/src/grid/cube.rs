use std::collections::HashMap;

use crate::sphere::{orient, SpherePoint, Vec3};

use super::Grid;

/// Radially projected cube mesh with `m × m` quads per face: `6m² + 2` points.
///
/// Each projected quad is split along the diagonal that keeps both triangles
/// locally Delaunay (the fixed diagonal wins ties), so the result coincides
/// with the convex hull of the points.
pub fn gen_cube_sphere(m: usize) -> Grid {
    assert!(m >= 2, "cube subdivision must be at least 2");
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut points = Vec::with_capacity(6 * m * m + 2);
    for x in 0..=m {
        for y in 0..=m {
            for z in 0..=m {
                let l = [x, y, z];
                if l.iter().any(|&c| c == 0 || c == m) {
                    let v = Vec3::from_iterator(l.iter().map(|&c| 2.0 * c as f64 / m as f64 - 1.0));
                    index.insert(l, points.len());
                    points.push(SpherePoint::from_unit(v.normalize()));
                }
            }
        }
    }

    let mut triangles = Vec::with_capacity(12 * m * m);
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, m] {
            for i in 0..m {
                for j in 0..m {
                    let at = |di: usize, dj: usize| {
                        let mut l = [0; 3];
                        l[axis] = side;
                        l[b] = i + di;
                        l[c] = j + dj;
                        index[&l]
                    };
                    let q = [at(0, 0), at(1, 0), at(1, 1), at(0, 1)];
                    triangles.extend(split_quad(&points, q));
                }
            }
        }
    }
    Grid::new(points, triangles).expect("cube sphere triangulation is valid")
}

fn oriented(points: &[SpherePoint], mut t: [usize; 3]) -> [usize; 3] {
    let [a, b, c] = t.map(|v| *points[v].vec());
    if orient(&a, &b, &c) < 0.0 {
        t.swap(1, 2);
    }
    t
}

fn split_quad(points: &[SpherePoint], q: [usize; 4]) -> [[usize; 3]; 2] {
    let t = oriented(points, [q[0], q[1], q[2]]);
    let [a, b, c] = t.map(|v| *points[v].vec());
    let n = (b - a).cross(&(c - a));
    let above = n.dot(&(points[q[3]].vec() - a));
    if above > 1e-14 * n.norm() {
        [oriented(points, [q[0], q[1], q[3]]), oriented(points, [q[1], q[2], q[3]])]
    } else {
        [t, oriented(points, [q[0], q[2], q[3]])]
    }
}
