//! Galerkin discretization and spectral analysis of the linearized
//! relativistic Boltzmann operator around the Maxwellian `exp(-v0)`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod collision;
pub mod error;
pub mod galerkin;
pub mod io;
pub mod linalg;
pub mod maxwellian;
pub mod quadrature;
pub mod semigroup;
pub mod spectral;

pub use error::{Error, Result};
pub use faer;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
