//! Labeled ground states of the half-filled spinless Fermi-Hubbard chain
//!
//! `H = -J sum_<ij> c_i^dag c_j + V1 sum_<ij> n_i n_j`
//!
//! The pipeline is: enumerate the fixed-particle-number Fock basis, build
//! the sparse Hamiltonian with fermionic hopping signs, extract the ground
//! state along a grid of `V1/J`, and label each state by phase. Sign flips and
//! component permutations (out-of-distribution inputs) are applied on top.

mod basis;
mod dataset;
mod ground;
mod hamiltonian;
mod order;

pub use basis::{hilbert_dimension, FockBasis};
pub use dataset::{
    default_v1_grid, make_dataset, make_dataset_from_states, solve_grid, DataGenConfig,
    Dataset, LabeledSample, Phase, SignMode, Split, PHASE_BOUNDARY,
};
pub use ground::{ground_state, GroundState, DENSE_SOLVER_MAX_DIM};
pub use hamiltonian::{build_hamiltonian, Boundary, SparseHamiltonian};
pub use order::{order_parameter, order_parameter_of_amplitudes};
