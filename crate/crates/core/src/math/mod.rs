//! Numerical building blocks: scalar types for differentiation, dense linear
//! algebra helpers, Gaussian algebra and finite differences.

pub mod ad;
pub mod fd;
pub mod gaussian;
pub mod linalg;
pub mod real;

pub use gaussian::{Block, Gaussian, GaussianJoint};
pub use real::{Dual, HyperDual, Real};
