//! Wide-stencil finite differences in geodesic normal coordinates.
//!
//! At each node the grid points within `√h` are projected to the tangent
//! plane. For every direction `ν` of a uniform fan with angular resolution
//! `dθ`, four of them (one per quadrant of the frame `(ν, ν⊥)`) are chosen
//! close to the `ν` axis, and weights are fitted so that
//! `Σ aⱼ (u(xⱼ) − u(xᵢ))` approximates `∂²u/∂ν²` and `Σ bⱼ (u(xⱼ) − u(xᵢ))`
//! approximates `∂u/∂ν`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridId};
use crate::sphere::{geodesic_distance, project_to_tangent, Vec2};

/// Fan of `2K` directions at angles `k·dθ`, `dθ = π / (2K)`,
/// `K = ⌊π / (2√h)⌋`. Direction `k` and `k + K` are orthogonal; direction 0
/// is the frame's `e1` axis and direction `K` its `e2` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionSet {
    dtheta: f64,
    pairs: usize,
}

impl DirectionSet {
    pub fn new(h: f64) -> Self {
        let pairs = ((PI / (2.0 * h.sqrt())).floor() as usize).max(1);
        DirectionSet { dtheta: PI / (2.0 * pairs as f64), pairs }
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    /// Number of orthogonal pairs `K`.
    pub fn pair_count(&self) -> usize {
        self.pairs
    }

    /// Number of directions `2K`.
    pub fn len(&self) -> usize {
        2 * self.pairs
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn direction(&self, k: usize) -> Vec2 {
        let t = k as f64 * self.dtheta;
        Vec2::new(t.cos(), t.sin())
    }

    /// Orthogonal pairs `(k, k + K)` for `k < K`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.pairs).map(move |k| (k, k + self.pairs))
    }
}

/// A grid point near the stencil centre with its normal coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub coords: Vec2,
}

/// All nodes within `√h` of node `i` (excluding `i`), sorted by index.
pub fn candidate_neighborhood(g: &Grid, i: usize) -> Result<Vec<Candidate>> {
    let radius = g.h().sqrt();
    let center = g.point(i);
    // Breadth-first over mesh edges; a margin of 2h keeps the search from
    // stopping at a ring of nodes just outside the ball.
    let reach = radius + 2.0 * g.h();
    let mut seen = vec![i];
    let mut queue = VecDeque::from([i]);
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if seen.contains(&w) {
                continue;
            }
            seen.push(w);
            let d = geodesic_distance(center, g.point(w));
            if d <= reach {
                queue.push_back(w);
            }
            if d <= radius {
                out.push(Candidate { index: w, coords: project_to_tangent(center, g.point(w), g.frame(i))? });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyNeighborhood(i));
    }
    out.sort_by_key(|c| c.index);
    Ok(out)
}

/// Quadrant of `z` in the frame `(ν, ν⊥)`, numbered 0..4 for Q1..Q4:
/// `cos θ ≥ 0` in Q1 and Q4, `sin θ ≥ 0` in Q1 and Q2.
fn quadrant(p: f64, q: f64) -> usize {
    match (p >= 0.0, q >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

/// Picks, per quadrant, the candidate closest in angle to the `ν` axis among
/// those with `|sin θ| ≥ dθ` and `r ≥ min_radius`. Returns positions into
/// `candidates`; ties go to the earliest candidate.
pub fn select_quadrant_neighbors(
    node: usize,
    candidates: &[Candidate],
    nu: Vec2,
    dtheta: f64,
    min_radius: f64,
) -> Result<[usize; 4]> {
    let perp = Vec2::new(-nu.y, nu.x);
    let mut best: [Option<(f64, usize)>; 4] = [None; 4];
    for (pos, c) in candidates.iter().enumerate() {
        let r = c.coords.norm();
        if r < min_radius || r == 0.0 {
            continue;
        }
        let (p, q) = (c.coords.dot(&nu), c.coords.dot(&perp));
        let s = (q / r).abs();
        if s < dtheta {
            continue;
        }
        let slot = &mut best[quadrant(p, q)];
        if slot.is_none_or(|(bs, _)| s < bs) {
            *slot = Some((s, pos));
        }
    }
    let mut out = [0; 4];
    for (k, b) in best.iter().enumerate() {
        out[k] = b.ok_or(Error::QuadrantEmpty { node, quadrant: k + 1 })?.1;
    }
    Ok(out)
}

/// Weights for the second (`a`) and first (`b`) derivative along `nu` from
/// four offsets `z`, from the moment conditions in the frame `(ν, ν⊥)` with
/// `p = z·ν`, `q = z·ν⊥`:
///
/// ```text
/// Σ aⱼ pⱼ = 0   Σ aⱼ qⱼ = 0   Σ aⱼ pⱼ² = 2   Σ aⱼ pⱼqⱼ = 0
/// Σ bⱼ pⱼ = 1   Σ bⱼ qⱼ = 0   Σ bⱼ pⱼ² = 0   Σ bⱼ pⱼqⱼ = 0
/// ```
pub fn derivative_coeffs(z: &[Vec2; 4], nu: Vec2) -> Result<([f64; 4], [f64; 4])> {
    let perp = Vec2::new(-nu.y, nu.x);
    let scale = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::SingularMomentSystem);
    }
    let mut m = Matrix4::zeros();
    for (j, v) in z.iter().enumerate() {
        let (p, q) = (v.dot(&nu) / scale, v.dot(&perp) / scale);
        m[(0, j)] = p;
        m[(1, j)] = q;
        m[(2, j)] = p * p;
        m[(3, j)] = p * q;
    }
    let lu = m.lu();
    if lu.determinant().abs() < 1e-12 {
        return Err(Error::SingularMomentSystem);
    }
    let a = lu.solve(&Vector4::new(0.0, 0.0, 2.0, 0.0)).ok_or(Error::SingularMomentSystem)?;
    let b = lu.solve(&Vector4::new(1.0, 0.0, 0.0, 0.0)).ok_or(Error::SingularMomentSystem)?;
    let s2 = scale * scale;
    Ok(([a[0] / s2, a[1] / s2, a[2] / s2, a[3] / s2], [b[0] / scale, b[1] / scale, b[2] / scale, b[3] / scale]))
}

/// Neighbours and weights for one node and one direction.
///
/// The four weights leave the `q²` moment free, so `second` approximates
/// `∂²u/∂ν² + leak·∂²u/∂ν⊥²` with `leak = ½ Σ aⱼ qⱼ² ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilEntry {
    pub nodes: [usize; 4],
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub leak: f64,
}

impl StencilEntry {
    pub fn second(&self, center: usize, u: &[f64]) -> f64 {
        let c = u[center];
        (0..4).map(|j| self.a[j] * (u[self.nodes[j]] - c)).sum()
    }

    pub fn first(&self, center: usize, u: &[f64]) -> f64 {
        let c = u[center];
        (0..4).map(|j| self.b[j] * (u[self.nodes[j]] - c)).sum()
    }
}

/// Stencils for every node and direction of a grid.
#[derive(Debug, Clone)]
pub struct StencilTable {
    grid_id: GridId,
    h: f64,
    directions: DirectionSet,
    entries: Vec<StencilEntry>,
    trace: Vec<[f64; 2]>,
    relaxed: Vec<u32>,
}

struct NodeStencil {
    entries: Vec<StencilEntry>,
    trace: [f64; 2],
    relaxed: u32,
}

impl StencilTable {
    pub fn build(g: &Grid) -> Result<Self> {
        let directions = DirectionSet::new(g.h());
        let nodes: Vec<NodeStencil> =
            (0..g.len()).into_par_iter().map(|i| build_node(g, i, &directions)).collect::<Result<_>>()?;
        let mut entries = Vec::with_capacity(g.len() * directions.len());
        let mut relaxed = Vec::with_capacity(g.len());
        let mut trace = Vec::with_capacity(g.len());
        for n in nodes {
            entries.extend(n.entries);
            trace.push(n.trace);
            relaxed.push(n.relaxed);
        }
        Ok(StencilTable { grid_id: g.id(), h: g.h(), directions, entries, trace, relaxed })
    }

    pub fn grid_id(&self) -> GridId {
        self.grid_id
    }

    pub fn len(&self) -> usize {
        self.relaxed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relaxed.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn entry(&self, node: usize, direction: usize) -> &StencilEntry {
        &self.entries[node * self.directions.len() + direction]
    }

    pub fn node_entries(&self, node: usize) -> &[StencilEntry] {
        let n = self.directions.len();
        &self.entries[node * n..(node + 1) * n]
    }

    /// Per node, how many quadrant selections needed the relaxed radius.
    /// Non-zero counts flag places where the grid is less isotropic than
    /// the stencil radius assumes.
    pub fn relaxed_quadrants(&self) -> &[u32] {
        &self.relaxed
    }

    /// Nonnegative weights `(α, β)` with `Δʰ = α·D₁₁ + β·D₂₂` along the
    /// frame axes, chosen so the two leaks cancel on quadratics.
    pub fn trace_weights(&self, node: usize) -> [f64; 2] {
        self.trace[node]
    }

    /// `Δʰu` at `node`.
    pub fn laplacian_at(&self, node: usize, u: &[f64]) -> f64 {
        let k = self.directions.pair_count();
        let [alpha, beta] = self.trace[node];
        alpha * self.entry(node, 0).second(node, u) + beta * self.entry(node, k).second(node, u)
    }

    /// `∇ʰu` at `node` in that node's tangent frame.
    pub fn gradient_at(&self, node: usize, u: &[f64]) -> Vec2 {
        let k = self.directions.pair_count();
        Vec2::new(self.entry(node, 0).first(node, u), self.entry(node, k).first(node, u))
    }
}

fn build_node(g: &Grid, i: usize, dirs: &DirectionSet) -> Result<NodeStencil> {
    let cands = candidate_neighborhood(g, i)?;
    let radius = g.h().sqrt();
    let strict = radius - 2.0 * g.h();
    let relaxed_radius = strict.min(radius / 2.0);
    let mut relaxed = 0;
    let mut entries = Vec::with_capacity(dirs.len());
    for k in 0..dirs.len() {
        let nu = dirs.direction(k);
        let picks = match select_quadrant_neighbors(i, &cands, nu, dirs.dtheta(), strict) {
            Ok(p) => p,
            Err(Error::QuadrantEmpty { .. }) => {
                relaxed += 1;
                select_quadrant_neighbors(i, &cands, nu, dirs.dtheta(), relaxed_radius)?
            }
            Err(e) => return Err(e),
        };
        let z = picks.map(|p| cands[p].coords);
        let (a, b) = derivative_coeffs(&z, nu)?;
        let perp = Vec2::new(-nu.y, nu.x);
        let leak = 0.5 * (0..4).map(|j| a[j] * z[j].dot(&perp).powi(2)).sum::<f64>();
        entries.push(StencilEntry { nodes: picks.map(|p| cands[p].index), a, b, leak });
    }
    let trace = trace_weights(entries[0].leak, entries[dirs.pair_count()].leak);
    Ok(NodeStencil { entries, trace, relaxed })
}

// Solves α + β·l₂ = 1, α·l₁ + β = 1; falls back to the plain sum if that
// would make a weight non-positive.
fn trace_weights(l1: f64, l2: f64) -> [f64; 2] {
    let det = 1.0 - l1 * l2;
    let (alpha, beta) = ((1.0 - l2) / det, (1.0 - l1) / det);
    if det > 0.0 && alpha > 0.0 && beta > 0.0 {
        [alpha, beta]
    } else {
        [1.0, 1.0]
    }
}
