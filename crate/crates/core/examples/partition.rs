//! Littlewood–Paley partition of unity and the χ₁ + χ₂ = 1 energy split.

use beamlab::model::CutoffSpec;
use beamlab::oscillatory::dyadic_partition;

fn main() -> beamlab::Result<()> {
    let pieces = dyadic_partition(1e-3, 1e3)?;
    println!("{} pieces cover [1e-3, 1e3]", pieces.len());
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let s = 1e-2 * 1e4f64.powf(i as f64 / 9_999.0);
        worst = worst.max((pieces.iter().map(|p| p.weight(s)).sum::<f64>() - 1.0).abs());
    }
    println!("max |sum phi_N - 1| on [1e-2, 1e2]: {worst:.2e}");
    let c = CutoffSpec::new(0.5);
    for l in [0.5, 0.85, 0.9, 1.0] {
        println!("lambda {l}: chi1 {:.6}, chi2 {:.6}", c.chi1_tilde(l), c.chi2_tilde(l));
    }
    Ok(())
}
