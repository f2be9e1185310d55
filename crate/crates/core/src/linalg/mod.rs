//! Linear algebra used by the finite-element solvers.
//!
//! The systems here are small (a few thousand unknowns at most), so a
//! profile-reducing ordering plus an envelope Cholesky factorization is
//! enough to treat every stiffness matrix directly. Dense Cholesky covers the
//! Gram systems of the inversion, whose size is the number of measurements.

mod dense;
mod envelope;
mod sparse;

pub use dense::{cholesky_solve_dense, DenseCholesky};
pub use envelope::EnvelopeCholesky;
pub use sparse::{CsrMatrix, TripletBuilder};

pub(crate) use envelope::reverse_cuthill_mckee;
