//! Exact and approximate constructions showing that IQP circuits with hidden
//! qubits can represent any distribution.
//!
//! A target over `n` bits is split into `2^{n+1}` two-sparse pieces; each
//! piece is encoded in the phases of one hidden branch, so `n + 1` hidden
//! qubits reproduce the target exactly.

mod construct;
mod decompose;
mod twobit;
mod uma;

pub use construct::{build_grid_circuit, build_universal_circuit, grid_counts, MAX_UNIVERSAL_BITS};
pub use decompose::{decompose_2sparse, decompose_3sparse, split_3sparse, AllocationMatrix, SparseComponent};
pub use twobit::{
    min_tvd_on_angle_grid, solve_two_bit_hidden, two_bit_model_distribution, tetrahedron_coords,
};
pub use uma::phases_for_2sparse;
