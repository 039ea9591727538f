//! Core library for referring video object segmentation on synthetic
//! scenes: candidate masks are embedded per frame, enriched with
//! positional, text-conditioned, and temporal relation cues, linked into
//! tracks, and retrieved by contrastive matching against an encoded
//! natural-language query.
//!
//! The numeric kernels ([`linalg`], [`ops`], [`mlp`], [`optim`],
//! [`hungarian`]) are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the full pipeline runs in the crate-wide precision
//! [`Real`].

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod generator;
pub mod gradcheck;
pub mod hungarian;
pub mod linalg;
pub mod mask;
pub mod mlp;
pub mod ops;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod scalar;
pub mod text;
pub mod track;
pub mod train;
pub mod tsrm;
pub mod visual;

pub use error::{Error, Result};

/// Precision used by the end-to-end pipeline.
pub type Real = f64;
/// Vector in pipeline precision.
pub type RealVector = linalg::Vector<Real>;
/// Matrix in pipeline precision.
pub type RealMatrix = linalg::Matrix<Real>;
