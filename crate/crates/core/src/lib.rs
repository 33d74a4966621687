//! Fictitious-domain finite element solver for a viscoelastic solid immersed
//! in an incompressible fluid, coupled by a distributed Lagrange multiplier.

pub mod analysis;
pub mod coupling;
pub mod error;
pub mod fespace;
pub mod forms;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod saddle;
pub mod selfcheck;
pub mod sparse;
pub mod timestep;

pub use error::{FdlmError, Result};
