//! Contrastive representation learning with clinical pseudo-labels.
//!
//! The crate covers the full desk-scale pipeline: synthetic cohort
//! generation, identity-aware data handling, two-view batch and positive
//! mask construction, contrastive / classification loss kernels with
//! analytic gradients, MLP training loops (contrastive pretraining,
//! frozen-encoder linear probe, supervised baseline, distillation),
//! evaluation metrics, and a latent-class theory simulator.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Scalar`];
//! the pipeline itself runs on [`Real`] (`f64`).

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod mlp;
pub mod pairs;
pub mod scalar;
pub mod synth;
pub mod theory;
pub mod train;

pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline.
pub type Real = f64;

/// Single-precision alias for callers that want compact payloads.
pub type Real32 = f32;
