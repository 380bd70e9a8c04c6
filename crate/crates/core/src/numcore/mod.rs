//! Dense numerics: matrices, least squares, reverse-mode gradients and seeded
//! randomness.

pub mod finite_diff;
pub mod lstsq;
pub mod matrix;
pub mod rng;
pub mod tape;

pub use finite_diff::finite_diff;
pub use lstsq::solve_least_squares;
pub use matrix::{argmax, dot, Matrix};
pub use rng::RngStream;
pub use tape::{grad, Tape, Var};
