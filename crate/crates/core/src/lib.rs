//! Density-matching maps on the unit sphere and their use for redistributing
//! mesh points.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod mesh_pipeline;
pub mod oit_solver;
pub mod ot_solver;
pub mod operators;
pub mod poisson;
pub mod sphere;
pub mod stencil;

pub use error::{Error, Result};
