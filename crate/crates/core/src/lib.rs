//! beamlab — a numerical lab for dispersive decay of the 1-D beam operator
//! `H = Δ² + V`.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] — grids, potential families, cutoffs, configuration;
//! * [`freekernel`] — closed-form free objects (`F_±`, `R₀^±(λ⁴)`, `G₀`, Fresnel kernel);
//! * [`spectral`] — dense pseudospectral realisation of `H` and the spectral-route propagator;
//! * [`resonance`] — Birman–Schwinger machinery and zero-energy classification;
//! * [`oscillatory`] — Littlewood–Paley pieces, `K_N`, `Θ` and dyadic sums;
//! * [`propagator`] — Stone's-formula kernels, decay curves and exponent fits;
//! * [`cli`] — the `beamlab` command-line surface.

pub mod cli;
pub mod error;
pub mod freekernel;
pub mod model;
pub mod oscillatory;
pub mod propagator;
pub mod quad;
pub mod resonance;
pub mod spectral;

pub use error::{BeamError, Result};
pub use num_complex::Complex64;
