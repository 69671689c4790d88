use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::sphere::{orient, SpherePoint, Vec3};

// Faces with orientation below this are treated as coplanar, not visible.
const VISIBLE_EPS: f64 = 1e-14;

/// Spherical Delaunay triangulation, obtained as the convex hull of the unit
/// vectors. Faces are oriented outward (`det[a, b, c] > 0`).
///
/// Incremental insertion; co-circular points yield an arbitrary but valid
/// split of the planar hull facet.
pub fn triangulate(points: &[SpherePoint]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!("need at least 4 points, got {}", points.len())));
    }
    let p: Vec<Vec3> = points.iter().map(|q| *q.vec()).collect();
    let seed = initial_tetrahedron(&p)?;

    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut alive: Vec<bool> = Vec::new();
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();

    let add = |f: [usize; 3], faces: &mut Vec<[usize; 3]>, alive: &mut Vec<bool>, edge_face: &mut HashMap<(usize, usize), usize>| {
        let id = faces.len();
        for k in 0..3 {
            edge_face.insert((f[k], f[(k + 1) % 3]), id);
        }
        faces.push(f);
        alive.push(true);
    };

    let [a, b, c, d] = seed;
    let tet = if volume(&p, [a, b, c], d) < 0.0 {
        [[a, b, c], [a, c, d], [a, d, b], [b, d, c]]
    } else {
        [[a, c, b], [a, b, d], [a, d, c], [b, c, d]]
    };
    for f in tet {
        add(f, &mut faces, &mut alive, &mut edge_face);
    }

    let in_seed: HashSet<usize> = seed.into_iter().collect();
    for i in (0..p.len()).filter(|i| !in_seed.contains(i)) {
        // Newest faces first: consecutive inputs tend to be spatially close.
        let start = (0..faces.len()).rev().find(|&f| alive[f] && volume(&p, faces[f], i) > VISIBLE_EPS);
        let Some(start) = start else {
            return Err(Error::DegenerateConfiguration(format!("point {i} is not outside the hull (duplicate?)")));
        };
        let mut visible = vec![start];
        let mut seen: HashSet<usize> = HashSet::from([start]);
        let mut k = 0;
        while k < visible.len() {
            let f = faces[visible[k]];
            k += 1;
            for e in 0..3 {
                let nb = edge_face[&(f[(e + 1) % 3], f[e])];
                if seen.insert(nb) && volume(&p, faces[nb], i) > VISIBLE_EPS {
                    visible.push(nb);
                }
            }
        }
        let vis: HashSet<usize> = visible.iter().copied().collect();
        let mut horizon = Vec::new();
        for &f in &visible {
            let fv = faces[f];
            for e in 0..3 {
                let (u, v) = (fv[e], fv[(e + 1) % 3]);
                if !vis.contains(&edge_face[&(v, u)]) {
                    horizon.push((u, v));
                }
            }
        }
        for &f in &visible {
            alive[f] = false;
            let fv = faces[f];
            for e in 0..3 {
                edge_face.remove(&(fv[e], fv[(e + 1) % 3]));
            }
        }
        for (u, v) in horizon {
            add([u, v, i], &mut faces, &mut alive, &mut edge_face);
        }
    }

    let out: Vec<[usize; 3]> = faces.into_iter().zip(alive).filter_map(|(f, a)| a.then_some(f)).collect();
    if out.iter().any(|f| orient(&p[f[0]], &p[f[1]], &p[f[2]]) <= 0.0) {
        return Err(Error::DegenerateConfiguration("points do not surround the origin".into()));
    }
    Ok(out)
}

// Positive when `q` lies on the outer side of face `f`.
fn volume(p: &[Vec3], f: [usize; 3], q: usize) -> f64 {
    let (a, b, c) = (p[f[0]], p[f[1]], p[f[2]]);
    (b - a).cross(&(c - a)).dot(&(p[q] - a))
}

fn initial_tetrahedron(p: &[Vec3]) -> Result<[usize; 4]> {
    let a = 0;
    let b = (1..p.len())
        .max_by(|&i, &j| (p[i] - p[a]).norm().total_cmp(&(p[j] - p[a]).norm()))
        .unwrap();
    let line = |i: usize| (p[i] - p[a]).cross(&(p[b] - p[a])).norm();
    let c = (0..p.len()).max_by(|&i, &j| line(i).total_cmp(&line(j))).unwrap();
    if line(c) < 1e-10 {
        return Err(Error::DegenerateConfiguration("points are collinear".into()));
    }
    let vol = |i: usize| volume(p, [a, b, c], i).abs();
    let d = (0..p.len()).max_by(|&i, &j| vol(i).total_cmp(&vol(j))).unwrap();
    if vol(d) < 1e-10 {
        return Err(Error::DegenerateConfiguration("points are coplanar".into()));
    }
    Ok([a, b, c, d])
}
