//! Sup-norm decay sweeps and power-law fits for the free beam: |t|^{-1/2} for the
//! massless wave, |t|^{-1/4} for the massive low band.

use beamlab::model::{build_grid, sample_potential, CutoffSpec, PotentialSpec};
use beamlab::propagator::{decay_curve, fit_exponent, sweep_times, Band, KernelKind, KernelRequest, StoneEngine, Subgrid};

fn main() -> beamlab::Result<()> {
    let s = sample_potential(&PotentialSpec::zero(), &build_grid(10.0, 64)?)?;
    let engine = StoneEngine::new(&s);
    let sub = Subgrid::for_sweep(&s.grid, 1000.0);
    let cut = Some(CutoffSpec::new(1.0));
    for (label, m, band, cutoff) in [("m=0 full", 0.0, Band::Full, None), ("m=1 low", 1.0, Band::Low, cut)] {
        let ts = sweep_times(10.0, 1000.0, 12, m);
        let curve = decay_curve(&engine, &KernelRequest::new(m, KernelKind::Cos, band, cutoff), &ts, &sub)?;
        let fit = fit_exponent(&curve, None)?;
        println!("{label:<9} slope {:+.4} ± {:.1e} over t in [{}, {:.1}]", fit.slope, fit.stderr, fit.window.0, fit.window.1);
    }
    Ok(())
}
