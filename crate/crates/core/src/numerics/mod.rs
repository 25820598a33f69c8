//! Dense linear algebra and reverse-mode automatic differentiation.
//!
//! Everything here is sized for the small systems the rest of the crate
//! solves: feature dimensions in the tens, batch sizes in the hundreds.
//! Matrices are dense row-major; factorizations fail loudly instead of
//! regularizing silently.

mod cholesky;
mod matrix;
mod special;
mod tape;

pub use cholesky::{cholesky, log_det, solve_spd, CholeskyFactor};
pub use matrix::{dot, norm2, Matrix};
pub use special::ln_gamma;
pub use tape::{Gradients, NodeId, Tape};
