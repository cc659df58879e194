//! Minimal dense linear algebra, a deterministic PRNG, and a symmetric
//! eigensolver. Everything is `f64`; summation order is fixed (row-major,
//! left to right) so results are identical run to run.

mod eig;
mod matrix;
mod rng;

pub use eig::{sym_eig, SymEig};
pub use matrix::DenseMatrix;
pub use rng::{Dist, SeededRng};
