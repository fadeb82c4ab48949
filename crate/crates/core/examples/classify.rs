//! Zero-energy classification of the three reference potentials.

use beamlab::model::{build_grid, sample_potential, PotentialSpec};
use beamlab::resonance::classify;

fn main() -> beamlab::Result<()> {
    let cases = [
        ("sech2(-0.3)", PotentialSpec::scaled_sech2(-0.3), 15.0),
        ("resonance(1,1)", PotentialSpec::resonance_example(1.0, 1.0), 8.0),
        ("resonance(0,1)", PotentialSpec::resonance_example(0.0, 1.0), 8.0),
    ];
    for (name, spec, l) in cases {
        let s = sample_potential(&spec, &build_grid(l, 256)?)?;
        let r = classify(&s, 1e-8)?;
        let tail = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
        println!(
            "{name:<16} {:?}  dim Q2^0 = {}, dim Q3 = {}, smallest sv {:.1e} / {:.1e}",
            r.classification,
            r.q20_dim,
            r.q3_dim,
            tail(&r.q20_spectrum),
            tail(&r.q3_spectrum)
        );
    }
    Ok(())
}
