//! Straggler-tolerant, privacy-preserving approximate coded computation.
//!
//! Inputs are split into blocks, mixed with random masks through a rational
//! (Berrut) interpolant, encrypted per worker, and decoded approximately from
//! whichever subset of workers answers in time.

pub mod cluster;
pub mod codec;
pub mod dl;
pub mod ecc;
pub mod error;
pub mod realmat;
pub mod stats;

pub use error::{Error, Result};
pub use realmat::{QuantizedMatrix, RealMatrix};
