//! Spherical point sets with a triangulation, spacing parameter `h`, tangent
//! frames and lumped quadrature weights.

mod cube;
mod hull;
mod io;
mod locate;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

pub use cube::gen_cube_sphere;
pub use hull::triangulate;
pub use io::{read_grid, write_grid, write_mesh};

use crate::error::{Error, Result};
use crate::sphere::{orient, spherical_triangle_area, SpherePoint, TangentFrame, Vec3};

use locate::BucketIndex;

/// Identity tag shared by a grid and the fields sampled on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(u64);

impl GridId {
    fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        GridId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

/// Triangulated point set on S².
#[derive(Debug, Clone)]
pub struct Grid {
    id: GridId,
    points: Vec<SpherePoint>,
    triangles: Vec<[usize; 3]>,
    h: f64,
    frames: Vec<TangentFrame>,
    weights: Vec<f64>,
    // triangle across edge (t[k], t[k+1])
    tri_adj: Vec<[usize; 3]>,
    node_tris: Vec<Vec<usize>>,
    node_nbrs: Vec<Vec<usize>>,
    index: BucketIndex,
}

impl Grid {
    /// Builds a grid from points and positively oriented triangles covering S².
    pub fn new(points: Vec<SpherePoint>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let h = compute_h(&points, &triangles);
        Self::with_h(points, triangles, h)
    }

    /// As [`Grid::new`] with a known spacing parameter (used when loading files).
    pub fn with_h(points: Vec<SpherePoint>, triangles: Vec<[usize; 3]>, h: f64) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::DegenerateConfiguration(format!("{n} points")));
        }
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::DegenerateConfiguration(format!("triangle {t} references a missing point")));
            }
            let [a, b, c] = tri.map(|v| *points[v].vec());
            if orient(&a, &b, &c) <= 0.0 {
                return Err(Error::DegenerateConfiguration(format!("triangle {t} is not positively oriented")));
            }
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if edges.insert(e, (t, k)).is_some() {
                    return Err(Error::DegenerateConfiguration(format!("edge {e:?} used twice")));
                }
            }
        }
        let mut tri_adj = vec![[usize::MAX; 3]; triangles.len()];
        for (&(a, b), &(t, k)) in &edges {
            match edges.get(&(b, a)) {
                Some(&(u, _)) => tri_adj[t][k] = u,
                None => return Err(Error::DegenerateConfiguration(format!("edge ({a}, {b}) has no twin"))),
            }
        }
        let n_edges = edges.len() / 2;
        if n as i64 - n_edges as i64 + triangles.len() as i64 != 2 {
            return Err(Error::DegenerateConfiguration("Euler characteristic is not 2".into()));
        }

        let mut node_tris = vec![Vec::new(); n];
        let mut weights = vec![0.0; n];
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| *points[v].vec());
            let area = spherical_triangle_area(&a, &b, &c);
            for &v in tri {
                node_tris[v].push(t);
                weights[v] += area / 3.0;
            }
        }
        if let Some(i) = node_tris.iter().position(|t| t.is_empty()) {
            return Err(Error::DegenerateConfiguration(format!("point {i} is not in any triangle")));
        }
        let mut node_nbrs = vec![Vec::new(); n];
        for &(a, b) in edges.keys() {
            node_nbrs[a].push(b);
        }
        for nb in &mut node_nbrs {
            nb.sort_unstable();
        }
        let frames = points.iter().map(|&p| TangentFrame::new(p)).collect();
        let index = BucketIndex::new(&points);
        Ok(Grid { id: GridId::fresh(), points, triangles, h, frames, weights, tri_adj, node_tris, node_nbrs, index })
    }

    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.points[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Spacing parameter: every point of S² lies within `h` of a grid point.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn frame(&self, i: usize) -> &TangentFrame {
        &self.frames[i]
    }

    /// Per-node quadrature weights (one third of the incident spherical
    /// triangle areas). They sum to 4π.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mesh neighbours of node `i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.node_nbrs[i]
    }

    pub fn incident_triangles(&self, i: usize) -> &[usize] {
        &self.node_tris[i]
    }

    /// `Σ wᵢ fᵢ`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, f)| w * f).sum()
    }

    /// Quadrature mean `∫f / 4π` (weights normalized by their sum).
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / self.weights.iter().sum::<f64>()
    }

    pub(crate) fn tri_vertices(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|v| *self.points[v].vec())
    }
}

/// Maximum spherical circumradius over all triangles: a computable stand-in
/// for `sup_x min_y d(x, y)`, exact when every triangle contains its
/// circumcentre.
pub fn compute_h(points: &[SpherePoint], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| *points[v].vec());
            let n = (b - a).cross(&(c - a));
            n.cross(&a).norm().atan2(n.dot(&a))
        })
        .fold(0.0, f64::max)
}

/// Nodal values aligned to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid_id: GridId,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField { grid_id: grid.id(), values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ScalarField { grid_id: grid.id(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&SpherePoint) -> f64) -> Self {
        ScalarField { grid_id: grid.id(), values: grid.points().iter().map(f).collect() }
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if self.grid_id != grid.id() || self.values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Per-node image points of a map sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapField {
    pub grid_id: GridId,
    pub images: Vec<SpherePoint>,
}

impl MapField {
    pub fn identity(grid: &Grid) -> Self {
        MapField { grid_id: grid.id(), images: grid.points().to_vec() }
    }

    pub fn new(grid: &Grid, images: Vec<SpherePoint>) -> Result<Self> {
        if images.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(MapField { grid_id: grid.id(), images })
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if self.grid_id != grid.id() || self.images.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Largest geodesic displacement `max_i d(x_i, images_i)`.
    pub fn max_displacement(&self, grid: &Grid) -> f64 {
        grid.points()
            .iter()
            .zip(&self.images)
            .map(|(x, y)| crate::sphere::geodesic_distance(x, y))
            .fold(0.0, f64::max)
    }
}
