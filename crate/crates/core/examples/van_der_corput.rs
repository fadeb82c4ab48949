//! Dyadic oscillatory pieces K_N against the Θ bound, and the three dyadic sums.

use beamlab::freekernel::Sign;
use beamlab::oscillatory::{dyadic_sum_check, k_n, stationary_index, theta, theta_branch, OscIntegrand, SumVariant};

fn main() -> beamlab::Result<()> {
    let (t, m, n_dd) = (100.0, 1.0, -12);
    let psi = t / 4.0;
    let n0 = stationary_index(psi, t);
    println!("t = {t}, m = {m}, Psi = {psi}, N0 = {n0:?}");
    println!("{:>4} {:>12} {:>12} {:>8} {:>6}", "N", "|K_N|", "Theta", "ratio", "case");
    for n in -8..=6 {
        let k = k_n(Sign::Plus, n, &OscIntegrand::unit(t, m, psi), 1e-8, 1 << 24)?;
        let th = theta(n, n0, m, t, n_dd)?;
        println!(
            "{n:>4} {:>12.4e} {:>12.4e} {:>8.3} {:>6?}",
            k.value.norm(),
            th,
            k.value.norm() / th,
            theta_branch(n, n0, m, n_dd)
        );
    }

    println!("\nsum / bound across t:");
    for t in [1.0f64, 100.0, 1e4] {
        let n0 = stationary_index(t.sqrt(), t);
        let w = dyadic_sum_check(SumVariant::Weighted, 0.0, t, 0.0, n0, 0)?;
        let ms = dyadic_sum_check(SumVariant::Mass, 1.0, t, 0.0, n0, 0)?;
        let q = dyadic_sum_check(SumVariant::Quartic, 0.0, t, 0.0, None, 0)?;
        println!("  t = {t:>7}: weighted {:.3}, mass {:.3}, quartic {:.3}", w.ratio, ms.ratio, q.ratio);
    }
    Ok(())
}
