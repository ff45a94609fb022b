//! Linear algebra used by the Green-function and counting modules.

pub mod cg;
pub mod dense;
pub mod dst;
pub mod skyline;

pub use cg::solve_laplacian;
pub use dense::{dense_ldlt_inertia, pencil_top_eigenvalues, symmetric_eigen_desc, Inertia};
pub use dst::BoxPoisson;
pub use skyline::{InertiaCounter, SkylineMatrix};
