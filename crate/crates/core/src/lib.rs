//! Pseudospectral laboratory for convex integration of the transport
//! equation on the periodic torus.
//!
//! The crate builds Mikado blocks, temporal oscillators, perturbations and
//! defect fields on a space-time lattice, iterates the construction, and
//! measures every identity and scaling law it relies on.

pub mod calculus;
pub mod defect;
pub mod driver;
pub mod error;
pub mod mikado;
pub mod perturbation;
pub mod temporal;
pub mod torus_field;

pub use error::{LabError, Result};
pub use torus_field::{GridSpec, ScalarField, VectorField};
