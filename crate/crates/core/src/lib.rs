//! Geodesic-orbit metrics on compact homogeneous spaces.

#![allow(clippy::needless_range_loop)]

pub mod algebra;
pub mod cli;
pub mod decomp;
pub mod error;
pub mod go;
pub mod isotropy;
pub mod linalg;
pub mod metric;
pub mod par;
pub mod scalar;
pub mod stiefel;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};
