//! Numerical geometric quantization and symplectic reduction for torus
//! actions on products of complex projective spaces.
//!
//! The crate builds the Guillemin–Sternberg map `A_k` and its half-form
//! corrected variant `B_k` as finite matrices, evaluates the densities `I_k`
//! and `J_k` that relate upstairs and downstairs norms, and measures how far
//! each map is from unitary as `k` grows.
//!
//! Module map:
//! - [`toric_geometry`]: the model manifold, charts and pointwise Kähler data
//! - [`torus_action`]: moment map, flows, orbit volumes, zero-set quadrature
//! - [`sections`]: monomial sections, half-forms, the descent contraction
//! - [`integration`]: quadrature on M, the zero set, the Lie algebra ball
//! - [`densities`]: `I_k`, `J_k`, Laplace leading order, the Hessian of ρ
//! - [`reduction_maps`]: Gram pencils, Toeplitz pairs, peak sections
//! - [`scenarios`]: the shipped model/action pairs

pub mod densities;
pub mod error;
pub mod integration;
pub mod numeric;
pub mod reduction_maps;
pub mod scenarios;
pub mod sections;
pub mod toric_geometry;
pub mod torus_action;

pub use error::{Error, Result};
