//! Adiabatic quantum optimization with randomized paths on bit-symmetric
//! (Hamming-weight) cost functions.
//!
//! The `2^n`-dimensional dynamics is reduced to the `(n+1)`-dimensional
//! maximal-spin subspace. Exact spectral gaps from that reduction are
//! cross-checked against the large-spin semiclassical theory: effective
//! potential, effective mass, local/global bifurcations and the cusp (A3)
//! condition that bounds tunnelling.

pub mod classical_spin;
pub mod driver;
pub mod error;
pub mod phase_diagram;
pub mod problem;
pub mod semiclassical;
pub mod spectral;
pub mod spin_algebra;

pub use error::{QaaError, Result};
