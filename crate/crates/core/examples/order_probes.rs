//! Small-λ orders: ‖(M⁺(λ))⁻¹‖ for each resonance type, and the cancellation gained
//! by the moment projections Q_α.

use beamlab::model::{build_grid, sample_potential, PotentialSpec};
use beamlab::resonance::{cancellation_probe, minv_blowup_probe, FarDomain};

fn main() -> beamlab::Result<()> {
    let lambdas: Vec<f64> = (0..9).map(|i| 1e-3 * 100f64.powf(i as f64 / 8.0)).collect();
    for (name, spec, l) in [
        ("regular", PotentialSpec::scaled_sech2(-0.3), 15.0),
        ("first kind", PotentialSpec::resonance_example(1.0, 1.0), 8.0),
        ("second kind", PotentialSpec::resonance_example(0.0, 1.0), 8.0),
    ] {
        let s = sample_potential(&spec, &build_grid(l, 256)?)?;
        let p = minv_blowup_probe(&s, &lambdas)?;
        println!("{name:<12} |M^-1| ~ lambda^{:.3} (stderr {:.1e})", p.fit.slope, p.fit.stderr);
    }
    let s = sample_potential(&PotentialSpec::resonance_example(1.0, 1.0), &build_grid(8.0, 256)?)?;
    for alpha in 0..=3 {
        let p = cancellation_probe(&s, alpha, &lambdas, FarDomain::default())?;
        println!("|Q_{alpha} v R0| ~ lambda^{:.3}", p.fit.slope);
    }
    Ok(())
}
