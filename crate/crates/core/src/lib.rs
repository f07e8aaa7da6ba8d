//! Watermarking toolkit for embedding services.
//!
//! An embedding provider multiplies every outgoing embedding by a secret
//! transformation matrix and renormalizes it. Because the transform is linear,
//! it survives embedding averaging, and the provider can later check a
//! suspect service for the mark by applying the matrix pseudoinverse and
//! comparing the recovered vectors against the originals.
//!
//! The crate is organized around that pipeline:
//!
//! - [`linalg`]: dense vectors/matrices, DFT magnitudes, SVD pseudoinverse,
//!   condition numbers, cosine similarity.
//! - [`keygen`]: sparse circulant key generation with full-rank and
//!   condition-number screening, plus key file serialization.
//! - [`codec`]: watermark injection and recovery for single embeddings and
//!   batches.
//! - [`corpus`]: JSON Lines embedding corpora and synthetic fixtures.
//! - [`verifier`]: paired cosine statistics (mean-cosine gap, AUC) and the
//!   watermarked/not-watermarked decision.
//! - [`attack`]: paraphrase-averaging and Gaussian-noise attack simulation,
//!   the averaging-invariance residual check, and the analytical
//!   trigger-word weight model it replaces.
//! - [`variants`]: alternative matrix constructions and hyperdimension
//!   obfuscation detectors (column correlation, regression importance).
//!
//! With the default `parallel` feature, batch operations fan out over rayon;
//! results are identical to the sequential fallback because every element is
//! computed independently and reduced in a fixed order.

pub mod attack;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod keygen;
pub mod linalg;
mod par;
pub mod variants;
pub mod verifier;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
