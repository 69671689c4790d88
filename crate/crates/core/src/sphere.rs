//! Exact geometry on the unit sphere S².
//!
//! Everything downstream (stencils, transport maps, interpolation) is expressed
//! through [`SpherePoint`] and tangent vectors in ambient coordinates. Distances
//! use the `atan2(|a×b|, a·b)` form, which keeps full relative precision both
//! for nearby points (stencil radii) and for nearly antipodal ones.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// Geodesic distances at or beyond this value are treated as antipodal.
pub const ANTIPODAL_CUTOFF: f64 = PI - 1e-9;

const UNIT_TOL: f64 = 1e-12;

/// A point on the unit sphere, stored by its ambient coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Vec3);

impl SpherePoint {
    /// Validating constructor; the coordinates must already have unit norm.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotOnSphere(x, y, z));
        }
        Ok(SpherePoint(v))
    }

    /// Normalizes `v`; see [`project_to_sphere`].
    pub fn from_vec(v: Vec3) -> Result<Self> {
        project_to_sphere(v)
    }

    pub(crate) fn from_unit(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        SpherePoint(v)
    }

    pub fn north_pole() -> Self {
        SpherePoint(Vec3::z())
    }

    pub fn vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    /// Latitude in radians, in [-π/2, π/2].
    pub fn latitude(&self) -> f64 {
        self.0.z.clamp(-1.0, 1.0).asin()
    }

    /// Longitude in radians, in (-π, π].
    pub fn longitude(&self) -> f64 {
        self.0.y.atan2(self.0.x)
    }

    pub fn antipode(&self) -> Self {
        SpherePoint(-self.0)
    }
}

/// A tangent vector at `base`, in ambient coordinates (`v · base = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub base: SpherePoint,
    pub v: Vec3,
}

impl TangentVector {
    /// Builds a tangent vector, removing any normal component of `v`.
    pub fn new(base: SpherePoint, v: Vec3) -> Self {
        let n = base.0;
        TangentVector { base, v: v - n * n.dot(&v) }
    }

    pub fn zero(base: SpherePoint) -> Self {
        TangentVector { base, v: Vec3::zeros() }
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }
}

/// Orthonormal right-handed frame `{e1, e2, base}` of the tangent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub base: SpherePoint,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl TangentFrame {
    /// Deterministic frame: Gram-Schmidt on the ambient axis along which `base`
    /// has its smallest-magnitude component (ties go to the lowest axis).
    pub fn new(base: SpherePoint) -> Self {
        let n = base.0;
        let mut axis = 0;
        for k in 1..3 {
            if n[k].abs() < n[axis].abs() {
                axis = k;
            }
        }
        let mut a = Vec3::zeros();
        a[axis] = 1.0;
        let e1 = (a - n * n.dot(&a)).normalize();
        let e2 = n.cross(&e1);
        TangentFrame { base, e1, e2 }
    }

    /// Tangent-plane coordinates of an ambient tangent vector.
    pub fn coords(&self, v: &Vec3) -> Vec2 {
        Vec2::new(v.dot(&self.e1), v.dot(&self.e2))
    }

    /// Ambient vector for tangent-plane coordinates.
    pub fn ambient(&self, c: &Vec2) -> Vec3 {
        self.e1 * c.x + self.e2 * c.y
    }
}

/// Great-circle distance in radians, in [0, π].
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    a.0.cross(&b.0).norm().atan2(a.0.dot(&b.0))
}

/// Exponential map: walks `‖p.v‖` along the great circle leaving `p.base`
/// in direction `p.v`.
pub fn exp_map(p: &TangentVector) -> Result<SpherePoint> {
    let n = p.v.norm();
    if n >= PI {
        return Err(Error::MagnitudeExceedsInjectivityRadius(n));
    }
    if n == 0.0 {
        return Ok(p.base);
    }
    let q = p.base.0 * n.cos() + p.v * (n.sin() / n);
    Ok(SpherePoint(q.normalize()))
}

/// Inverse of [`exp_map`] away from the cut locus.
pub fn log_map(base: &SpherePoint, target: &SpherePoint) -> Result<TangentVector> {
    let d = geodesic_distance(base, target);
    if d >= ANTIPODAL_CUTOFF {
        return Err(Error::AntipodalPoints);
    }
    let w = target.0 - base.0 * base.0.dot(&target.0);
    let wn = w.norm();
    if wn == 0.0 || d == 0.0 {
        return Ok(TangentVector::zero(*base));
    }
    Ok(TangentVector { base: *base, v: w * (d / wn) })
}

/// Geodesic normal coordinates of `x` around `center`, expressed in `frame`.
/// The returned vector has length `d(x, center)`.
pub fn project_to_tangent(center: &SpherePoint, x: &SpherePoint, frame: &TangentFrame) -> Result<Vec2> {
    let l = log_map(center, x)?;
    Ok(frame.coords(&l.v))
}

/// Radial projection `q / ‖q‖`. Agrees with the exponential map to second
/// order: `Proj(x + v) = exp_x(v) + O(‖v‖²)` for tangent `v`.
pub fn project_to_sphere(q: Vec3) -> Result<SpherePoint> {
    let n = q.norm();
    if !(n > 1e-12) {
        return Err(Error::DegenerateVector(n));
    }
    Ok(SpherePoint(q / n))
}

/// Signed volume `det[a, b, c]`; positive when `(a, b, c)` is counterclockwise
/// seen from outside the sphere.
pub fn orient(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// Area (spherical excess) of the geodesic triangle `abc`.
pub fn spherical_triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let num = orient(a, b, c).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}
