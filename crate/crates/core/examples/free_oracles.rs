//! Free objects: the Stone-route cos kernel against the closed-form Fresnel kernel,
//! and the Taylor splittings of F(λ|x − y|).

use beamlab::freekernel::{fresnel_cos_kernel, taylor_split_check, Sign};
use beamlab::model::{build_grid, sample_potential, PotentialSpec};
use beamlab::propagator::{Band, KernelKind, KernelRequest, StoneEngine, Subgrid};

fn main() -> beamlab::Result<()> {
    let free = sample_potential(&PotentialSpec::zero(), &build_grid(10.0, 64)?)?;
    let engine = StoneEngine::new(&free);
    let sub = Subgrid::quadratic(6.0, 8);
    let req = KernelRequest::new(0.0, KernelKind::Cos, Band::Full, None);
    println!("{:>6} {:>12} {:>12}", "t", "sup", "max |err|");
    for k in engine.kernels(&[1.0, 4.0, 16.0], &req, &sub)? {
        let mut err: f64 = 0.0;
        for (a, &x) in sub.xs.iter().enumerate() {
            for (b, &y) in sub.ys.iter().enumerate() {
                err = err.max((k.values[(a, b)].re - fresnel_cos_kernel(k.t, x, y)?).abs());
            }
        }
        println!("{:>6} {:>12.6e} {:>12.3e}", k.t, k.sup_norm(), err);
    }

    for alpha in 1..=3 {
        let e = taylor_split_check(alpha, Sign::Plus, 0.8, 1.5, 0.4, 1e-12, 1 << 16)?;
        println!("taylor order {alpha}: |lhs - rhs| = {e:.2e}");
    }
    Ok(())
}
