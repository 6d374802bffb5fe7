//! Discrete membrane model: the Gaussian interface whose precision is the
//! squared normalized lattice Laplacian.

pub mod boxsolve;
pub mod error;
pub mod green;
pub mod infvol;
pub mod lattice;
pub mod linalg;
pub mod orbit;
pub mod poly;
pub mod quadrature;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod thomee;

pub use error::{Error, Result};
