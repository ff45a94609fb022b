//! Sparse potentials, Green functions and negative-eigenvalue counting on
//! weighted graphs.

pub mod bs;
pub mod error;
pub mod graph;
pub mod green;
pub mod heat;
pub mod lattice;
pub mod linalg;
pub mod metric;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
