//! Grids, potentials, cutoffs and experiment configuration.

mod config;
mod cutoff;
mod grid;
mod potential;

pub use config::{load_config, parse_config, CutoffChoice, ExperimentConfig, OutputFormat, QuadratureConfig};
pub use cutoff::{smoothstep, CutoffSpec};
pub use grid::{build_grid, Grid};
pub use potential::{
    resonance_blend_coefficients, sample_potential, Blend, PotentialFamily, PotentialSample, PotentialSpec,
    ResonanceSampling,
};
