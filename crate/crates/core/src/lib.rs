//! Hessian-based influence, uncertainty and extrapolation analysis for small
//! convolutional classifiers, with an exact-diagonalization data generator
//! for the half-filled spinless Fermi-Hubbard chain.
//!
//! - [`fock`]: Fock basis, Hamiltonian, ground states, labeled datasets.
//! - [`model`]: 1D CNNs and a logistic model with exact gradients and HVPs.
//! - [`hessian`]: dense Hessian assembly, spectrum, damped solves.
//! - [`toolbox`]: influence, RelatIF, RUE, LEES, anomaly tests, oracles.

pub mod error;
pub mod fock;
pub mod hessian;
pub mod io;
pub mod linalg;
pub mod model;
pub mod toolbox;

pub use error::{Error, Result};
pub use fock::{DataGenConfig, Dataset, LabeledSample};
pub use hessian::{DampedHessian, Spectrum};
pub use model::{Example, LossKind, ModelConfig, ModelState, TrainConfig};
