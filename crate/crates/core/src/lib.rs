//! Parameter estimation for structured quantum channels.
//!
//! A channel family is described by an affine Choi matrix `X(h) = H₀ + Σ hₖHₖ`.
//! Measurement counts from known input states and POVMs define a least-squares
//! misfit over `h`, minimized subject to `X(h) ⪰ 0` and the family's convex
//! relations with a log-det barrier method. Auxiliary stages then push the
//! relations toward equality, and physical parameters are read off the optimal
//! variables.

pub mod channels;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod qcore;
pub mod solver;
pub mod tomography;

pub use error::{Error, Result};
