//! Pseudo-spectral simulation of nonlinear Schrödinger equations
//! `i∂ₜu + Δu = Vu + F(u)` on periodic boxes, together with diagnostics for
//! the long-range non-scattering mechanism: the pairing `⟨u(t), e^{itΔ}φ⟩`,
//! its derivative identity, tilde-frame limits, potential-term bounds,
//! growth fits, and the singular-measure cutoff construction.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod error;
pub mod fields;
pub mod glassey;
pub mod grid;
pub mod norms;
pub mod quadrature;
pub mod solver;
pub mod spectral;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
pub use grid::{GridField, Space, SpatialGrid};
