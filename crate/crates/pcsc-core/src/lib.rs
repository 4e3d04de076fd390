//! End-to-end simulator core for task-oriented wireless transmission of 3D
//! point clouds.
//!
//! The pipeline is: deterministic preprocessing of a raw scan into a
//! fixed-size normalized cloud ([`preprocess`]), a hierarchical set-abstraction
//! encoder that compresses the cloud into a D-dimensional latent vector
//! ([`model`]), power normalization and an AWGN channel acting on that latent
//! ([`channel`]), and two parallel receiver branches that reconstruct the
//! geometry and classify the object ([`model`]). [`training`] ties the pieces
//! together with a composite Chamfer + cross-entropy loss and an Adam loop;
//! [`eval`] runs fixed-SNR evaluations of trained models.
//!
//! Everything in this crate is pure computation over explicit state and seeds:
//! no files, no threads, no global RNG. The crate is `no_std`-compatible
//! (`alloc` required); the default `std` feature only enables runtime SIMD
//! detection in the GEMM backend.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod eval;
pub mod geometry;
pub mod mat;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod scalar;
pub mod training;

mod error;

pub use error::Error;
pub use scalar::Scalar;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
