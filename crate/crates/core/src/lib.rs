//! Curvature, curvature operators and homogeneity diagnostics for three
//! families of pseudo-Riemannian metrics.

pub mod curvature;
pub mod error;
pub mod families;
pub mod geodesics;
pub mod homogeneity;
pub mod models;
pub(crate) mod jet;
pub mod operators;
pub mod profile;
pub mod tensor;

pub use error::{Error, Result};
