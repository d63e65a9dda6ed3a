pub mod baseline;
pub mod envs;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod math;
pub mod model;
pub mod solvers;

pub use error::{NiocError, Result};
