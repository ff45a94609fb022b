//! Green functions `h_x` with `-Δh_x = δ_x`, capacities `μ_x² = h_x(x)` and
//! normalized inner products `h_x(y) / (μ_x μ_y)`.
//!
//! Three sources are provided: the closed formula on the origin-clamped
//! plane ([`Z2Green`]), a fast direct solver on lattice boxes ([`BoxGreen`])
//! and conjugate gradients on arbitrary weighted graphs ([`SolveGreen`]).
//! [`GreenTable`] caches values from any of them.

use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub mod boxed;
pub mod solve;
pub mod table;
pub mod z2;

pub use boxed::{richardson_capacity, BoxGreen};
pub use solve::{green_solve, SolveGreen};
pub use table::GreenTable;
pub use z2::{
    calibrate_c_norm, fundamental_z2, fundamental_z2_asymptotic, potential_kernel, random_patch_function,
    z2_energy_pairing, Calibration, QuadratureResult, QuadratureScheme, Z2Green, Z2Kernel, EULER_GAMMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenMethod {
    #[serde(rename = "solve")]
    Solve,
    #[serde(rename = "quadrature+formula")]
    QuadratureFormula,
}

/// Normalization and provenance carried by every Green table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GreenMetadata {
    pub method: GreenMethod,
    /// Factor between the raw kernel combination and `h_x`; `1` for solve paths.
    pub c_norm: f64,
    pub box_radius: Option<i64>,
    pub dimension: Option<usize>,
    /// Declared absolute accuracy of individual values.
    pub accuracy: f64,
}

/// Anything that can evaluate `h_x(y)`.
pub trait GreenSource: Send + Sync {
    type Vertex: Copy + Eq + Hash + Ord + Debug + Send + Sync;

    fn green(&self, x: Self::Vertex, y: Self::Vertex) -> Result<f64>;

    fn capacity(&self, x: Self::Vertex) -> Result<f64> {
        self.green(x, x)
    }

    /// Incident weight sum of `x`.
    fn mildness(&self, x: Self::Vertex) -> f64;

    /// Integer coordinates used when exporting tables.
    fn coords(&self, x: Self::Vertex) -> Vec<i64>;

    fn metadata(&self) -> GreenMetadata;
}
