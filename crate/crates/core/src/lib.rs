//! Metalens phase design: discrete optimal transport with the refraction
//! cost, phase recovery from the transport potential, and verification by
//! ray tracing under the generalized Snell law.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod config;
pub mod cost;
pub mod geometry;
pub mod optics;
pub mod ot;
pub mod phase;
pub mod pipeline;
