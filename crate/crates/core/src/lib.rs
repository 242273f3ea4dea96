//! Small-noise large deviations for stochastic reaction-diffusion systems on a
//! truncated integer lattice.
//!
//! The crate covers the discrete Laplacian and its edge factorisation, model
//! validation, an Euler-Maruyama simulator, the controlled skeleton equation,
//! a rate-function optimiser and Monte-Carlo checks of the large deviation
//! principle.

pub mod bench;
pub mod error;
pub mod lattice;
pub mod ldp;
pub mod model;
pub mod optim;
pub mod poly;
pub mod rate;
pub mod rng;
pub mod sde;
pub mod skeleton;

pub use error::{Condition, Error, Result};
pub use lattice::{apply_a, apply_b, apply_b_star, dirichlet_energy, EdgeVector, LatticeWindow, State};
pub use model::{Model, ModelSpec, ValidationReport};
pub use sde::{SdeConfig, TimeGrid, Trajectory};
pub use skeleton::Control;
