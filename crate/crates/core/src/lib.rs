//! Inverse first-passage solvers for Brownian motion.
//!
//! Given a survival distribution `g`, find the boundary `b` such that the
//! first time `W_t >= b(t)` has `P(τ > t) = g(t)`.

pub mod barrier;
pub mod error;
pub mod ext;
pub mod forward;
pub mod gaussian;
pub mod grid;
pub mod integral;
pub mod simulate;
pub mod stopping;
pub mod survival;

pub use error::{Error, Result};
