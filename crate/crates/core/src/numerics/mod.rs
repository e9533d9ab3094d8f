//! Dense matrices, seeded randomness and finite-difference gradient checks.

mod gradcheck;
mod matrix;
mod rng;

pub use gradcheck::{finite_diff_coords, finite_diff_grad, max_rel_error};
pub use matrix::{dot, pairwise_sq_dists, sq_dist, Exec, Matrix};
pub use rng::Rng64;
