//! Point location and barycentric interpolation on the triangulation.

use crate::error::{Error, Result};
use crate::sphere::{orient, project_to_sphere, SpherePoint, TangentVector, Vec3};

use super::{Grid, MapField, ScalarField};

const EDGE_EPS: f64 = 1e-15;

/// Triangle containing a query point and its barycentric weights with
/// respect to the triangle's vertices (non-negative, summing to one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub weights: [f64; 3],
}

/// Coarse bucketing of the points by cube face, used to seed triangle walks.
#[derive(Debug, Clone)]
pub(crate) struct BucketIndex {
    k: usize,
    buckets: Vec<Vec<usize>>,
}

fn bucket_of(v: &Vec3, k: usize) -> usize {
    let axis = (0..3).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
    let face = 2 * axis + usize::from(v[axis] < 0.0);
    let major = v[axis].abs();
    let cell = |c: f64| (((c / major + 1.0) * 0.5 * k as f64) as usize).min(k - 1);
    face * k * k + cell(v[(axis + 1) % 3]) * k + cell(v[(axis + 2) % 3])
}

impl BucketIndex {
    pub(crate) fn new(points: &[SpherePoint]) -> Self {
        let k = ((points.len() as f64 / 12.0).sqrt().round() as usize).max(1);
        let mut buckets = vec![Vec::new(); 6 * k * k];
        for (i, p) in points.iter().enumerate() {
            buckets[bucket_of(p.vec(), k)].push(i);
        }
        BucketIndex { k, buckets }
    }

    /// A node near `x` (the closest one in its bucket when the bucket is
    /// non-empty).
    fn near(&self, points: &[SpherePoint], x: &Vec3) -> usize {
        let best = |ids: &[usize]| ids.iter().copied().max_by(|&a, &b| points[a].vec().dot(x).total_cmp(&points[b].vec().dot(x)));
        best(&self.buckets[bucket_of(x, self.k)]).unwrap_or_else(|| {
            (0..points.len())
                .max_by(|&a, &b| points[a].vec().dot(x).total_cmp(&points[b].vec().dot(x)))
                .unwrap()
        })
    }
}

impl Grid {
    /// Locates `x`, walking from a triangle incident to a nearby node.
    pub fn locate(&self, x: &SpherePoint) -> Result<Location> {
        let node = self.index.near(&self.points, x.vec());
        self.locate_from(x, self.node_tris[node][0])
    }

    /// Locates `x` by a visibility walk starting at triangle `start`, falling
    /// back to an exhaustive search if the walk does not terminate.
    pub fn locate_from(&self, x: &SpherePoint, start: usize) -> Result<Location> {
        let x = x.vec();
        let mut t = start.min(self.triangles.len() - 1);
        for _ in 0..self.triangles.len() {
            let [a, b, c] = self.tri_vertices(t);
            let d = [orient(&b, &c, x), orient(&c, &a, x), orient(&a, &b, x)];
            let (k, dmin) = d.iter().copied().enumerate().min_by(|p, q| p.1.total_cmp(&q.1)).unwrap();
            if dmin >= -EDGE_EPS {
                return Ok(Location { triangle: t, weights: normalize(d) });
            }
            // vertex k is opposite edge (k + 1) % 3
            t = self.tri_adj[t][(k + 1) % 3];
        }
        self.locate_exhaustive(x)
    }

    fn locate_exhaustive(&self, x: &Vec3) -> Result<Location> {
        let mut best: Option<(f64, Location)> = None;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.tri_vertices(t);
            let d = [orient(&b, &c, x), orient(&c, &a, x), orient(&a, &b, x)];
            let s: f64 = d.iter().sum();
            if s <= 0.0 {
                continue;
            }
            let score = d.iter().copied().fold(f64::INFINITY, f64::min) / s;
            if best.as_ref().is_none_or(|(sc, _)| score > *sc) {
                best = Some((score, Location { triangle: t, weights: normalize(d) }));
            }
        }
        match best {
            Some((score, loc)) if score > -1e-9 => Ok(loc),
            _ => Err(Error::TriangleNotFound),
        }
    }

    /// Barycentric combination of nodal values at a located point.
    pub fn combine(&self, loc: &Location, values: &[f64]) -> f64 {
        let t = self.triangles[loc.triangle];
        (0..3).map(|k| loc.weights[k] * values[t[k]]).sum()
    }

    fn combine_vec(&self, loc: &Location, values: &[Vec3]) -> Vec3 {
        let t = self.triangles[loc.triangle];
        (0..3).map(|k| values[t[k]] * loc.weights[k]).sum()
    }

    /// Piecewise-linear interpolation of nodal values; exact at nodes and
    /// for constants.
    pub fn interp_scalar(&self, f: &ScalarField, x: &SpherePoint) -> Result<f64> {
        f.check(self)?;
        Ok(self.combine(&self.locate(x)?, &f.values))
    }

    /// Interpolates per-node tangent vectors (ambient coordinates) and
    /// projects the result onto the tangent plane at `x`.
    pub fn interp_vector(&self, w: &[Vec3], x: &SpherePoint) -> Result<TangentVector> {
        if w.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        Ok(self.interp_vector_at(&self.locate(x)?, w, x))
    }

    pub(crate) fn interp_vector_at(&self, loc: &Location, w: &[Vec3], x: &SpherePoint) -> TangentVector {
        TangentVector::new(*x, self.combine_vec(loc, w))
    }

    /// Evaluates a sampled map off-node: barycentric combination of the
    /// image points, renormalized onto the sphere.
    pub fn interp_map(&self, m: &MapField, x: &SpherePoint) -> Result<SpherePoint> {
        m.check(self)?;
        self.interp_map_at(&self.locate(x)?, &m.images)
    }

    pub(crate) fn interp_map_at(&self, loc: &Location, images: &[SpherePoint]) -> Result<SpherePoint> {
        let t = self.triangles[loc.triangle];
        let v: Vec3 = (0..3).map(|k| images[t[k]].vec() * loc.weights[k]).sum();
        project_to_sphere(v)
    }
}

// Weights are the volumes det(x, b, c), det(a, x, c), det(a, b, x): planar
// barycentric coordinates of the central projection of x into the plane abc.
fn normalize(d: [f64; 3]) -> [f64; 3] {
    let d = d.map(|v| v.max(0.0));
    let s: f64 = d.iter().sum();
    if s > 0.0 {
        d.map(|v| v / s)
    } else {
        [1.0 / 3.0; 3]
    }
}
