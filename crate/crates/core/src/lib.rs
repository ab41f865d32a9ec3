//! Tucker tensor train (T3) surrogate modeling: probing derivative tensors of
//! implicitly defined maps, randomized dimension reduction, fixed-rank
//! Riemannian fitting with rank continuation, and Taylor-surrogate assembly.
//!
//! Everything operates on 64-bit floats. Dense tensors act as brute-force
//! oracles at desk scale; the sweeping routines in [`sweep`] and the
//! decompositions in [`t3`] are what run at size.

pub mod deriv;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod sketch;
pub mod sweep;
pub mod t3;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, RankVector};
