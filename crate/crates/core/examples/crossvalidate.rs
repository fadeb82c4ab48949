//! The Stone route and the spectral route agree on the low-energy propagator.

use beamlab::model::{build_grid, sample_potential, PotentialSpec};
use beamlab::propagator::{crossvalidate, CrossOptions, KernelKind};

fn main() -> beamlab::Result<()> {
    let s = sample_potential(&PotentialSpec::scaled_sech2(-0.3), &build_grid(15.0, 128)?)?;
    for m in [0.0, 1.0] {
        let cv = crossvalidate(&s, 5.0, m, KernelKind::Cos, CrossOptions::default())?;
        println!(
            "m = {m}: discrepancy {:.2e} (lambda0 {:.3e}, sup {:.4e} vs {:.4e}, {} bound states removed)",
            cv.discrepancy, cv.lambda0, cv.stone_sup, cv.spectral_sup, cv.bound_states_removed
        );
    }
    Ok(())
}
