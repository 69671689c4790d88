use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tangent vector magnitude {0} is not below the injectivity radius π")]
    MagnitudeExceedsInjectivityRadius(f64),
    #[error("points are (nearly) antipodal; the log map direction is undefined")]
    AntipodalPoints,
    #[error("vector of norm {0:e} cannot be projected onto the sphere")]
    DegenerateVector(f64),
    #[error("point ({0}, {1}, {2}) is not on the unit sphere")]
    NotOnSphere(f64, f64, f64),
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no triangle contains the query point; the triangulation is broken")]
    TriangleNotFound,
    #[error("node {0} has no neighbours within the stencil radius")]
    EmptyNeighborhood(usize),
    #[error("node {node}: stencil quadrant Q{quadrant} has no admissible point")]
    QuadrantEmpty { node: usize, quadrant: usize },
    #[error("stencil moment system is singular (points nearly collinear)")]
    SingularMomentSystem,
    #[error("gradient norm {0} is outside the range where the transport map is defined")]
    GradientOutOfRange(f64),
    #[error("density is not strictly positive (min value {0})")]
    NonpositiveDensity(f64),
    #[error("gradient norm {0} has no radial solution for this cost")]
    NoRadialSolution(f64),
    #[error("source and target masses differ by {0:e}")]
    MassImbalance(f64),
    #[error("solver did not reach tolerance after {iters} iterations (residual {residual:e})")]
    MaxItersExceeded { iters: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("Lipschitz-constrained fallback did not converge (residual {0:e})")]
    FallbackDidNotConverge(f64),
    #[error("Fisher-Rao geodesic degenerates (non-positive square-root density)")]
    GeodesicDegenerate,
    #[error("intermediate map is tangled: composition error {0} exceeds threshold {1}")]
    TangledIntermediateMap(f64, f64),
    #[error("unknown density name '{0}'")]
    UnknownDensityName(String),
    #[error("unsupported raster: {0}")]
    UnsupportedRasterFormat(String),
    #[error("degenerate value range: hi ({hi}) must exceed lo ({lo})")]
    DegenerateRange { lo: f64, hi: f64 },
    #[error("field does not belong to this grid or has the wrong length")]
    GridMismatch,
    #[error("pushforward is unreliable: {0} inverted triangles")]
    UnreliableJacobian(usize),
    #[error("malformed grid file: {0}")]
    GridFormat(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
