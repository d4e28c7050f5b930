//! Gaussian variational inference under the weighted Fisher divergence
//! family (Fisher and score-based) and the KL divergence.
//!
//! Variational families are Gaussians N(μ, Σ) with Σ⁻¹ = TTᵀ, where the
//! lower-triangular T is sparse for hierarchical models. The crate covers
//! reparameterization-trick and batch-approximation SGD, a batch-and-match
//! baseline, closed-form analytics for Gaussian and univariate targets, and
//! diagnostics against reference posterior samples.

pub mod analytics;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod quadrature;
pub mod special;
pub mod targets;
pub mod unilab;

pub use error::{Error, Result};
