//! Dense spectrum of H = Δ² + V and the embedded eigenvalue at μ = 1.

use beamlab::model::{build_grid, sample_potential, PotentialSpec};
use beamlab::spectral::{build_hamiltonian, eigendecompose};

fn main() -> beamlab::Result<()> {
    let grid = build_grid(20.0, 512)?;
    let s = sample_potential(&PotentialSpec::embedded_example(), &grid)?;
    let sd = eigendecompose(&build_hamiltonian(&grid, &s)?)?;
    println!("lowest eigenvalues:");
    for j in 0..6 {
        println!("  {j:>3} {:>14.8} PR {:.3}", sd.eigenvalues[j], sd.participation[j]);
    }
    let j = sd.nearest_eigenvalue(1.0);
    println!(
        "nearest to 1: index {j}, mu = {:.10}, PR {:.3}, flagged bound: {}",
        sd.eigenvalues[j],
        sd.participation[j],
        sd.bound_state_indices.contains(&j)
    );
    Ok(())
}
