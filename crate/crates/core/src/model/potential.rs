use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::grid::Grid;
use crate::error::{BeamError, Result};
use crate::freekernel::g0_kernel;

/// Coefficients `a₀..a₄` of the even blend `p(x) = Σ a_k x^{2k}`.
///
/// `p(1) = 1`, `p'(1) = 1`, `p''(1) = p'''(1) = p''''(1) = 0`, so `ρ = p` on [-1, 1] and
/// `ρ = |x|` outside is C⁴. Solved once in exact rational arithmetic and frozen.
pub fn resonance_blend_coefficients() -> [f64; 5] {
    [35.0 / 128.0, 35.0 / 32.0, -35.0 / 64.0, 7.0 / 32.0, -5.0 / 128.0]
}

/// d-th derivative of `Σ c_k x^{2k}`.
fn even_poly_derivative(coeffs: &[f64], x: f64, d: u32) -> f64 {
    let mut s = 0.0;
    for (k, &a) in coeffs.iter().enumerate() {
        let p = 2 * k as u32;
        if p < d {
            continue;
        }
        let mut falling = 1.0;
        for j in 0..d {
            falling *= (p - j) as f64;
        }
        s += a * falling * x.powi((p - d) as i32);
    }
    s
}

/// (1 − x²)⁵ expanded in powers of x².
const BUMP: [f64; 6] = [1.0, -5.0, 10.0, -10.0, 5.0, -1.0];

/// `φ₁ = d + c·ρ + κ·β`, with `β = (1 − x²)⁵` on [-1, 1].
///
/// `κ = 0` for `c > 0`; for `c = 0` a bump of height `d/2` keeps the potential nontrivial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Blend {
    pub c: f64,
    pub d: f64,
    pub kappa: f64,
}

impl Blend {
    pub fn new(c: f64, d: f64) -> Blend {
        let kappa = if c > 0.0 { 0.0 } else { 0.5 * d };
        Blend { c, d, kappa }
    }

    pub fn rho_derivative(x: f64, k: u32) -> f64 {
        if x.abs() >= 1.0 {
            return match k {
                0 => x.abs(),
                1 => x.signum(),
                _ => 0.0,
            };
        }
        even_poly_derivative(&resonance_blend_coefficients(), x, k)
    }

    pub fn bump_derivative(x: f64, k: u32) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        even_poly_derivative(&BUMP, x, k)
    }

    pub fn phi_derivative(&self, x: f64, k: u32) -> f64 {
        let base = if k == 0 { self.d } else { 0.0 };
        base + self.c * Self::rho_derivative(x, k) + self.kappa * Self::bump_derivative(x, k)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi_derivative(x, 0)
    }

    /// `V = −φ''''/φ` evaluated pointwise.
    pub fn analytic_potential(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        -self.phi_derivative(x, 4) / self.phi(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceSampling {
    /// Grid-consistent: the discrete `T₀` inherits an exact null vector.
    #[default]
    Collocated,
    /// Pointwise `−Δ²φ₁/φ₁` at the nodes.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    Zero,
    ScaledSech2 { a: f64 },
    EmbeddedExample,
    ResonanceExample { c: f64, d: f64 },
    Tabulated { file: PathBuf },
}

impl PotentialFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialFamily::Zero => "zero",
            PotentialFamily::ScaledSech2 { .. } => "scaled_sech2",
            PotentialFamily::EmbeddedExample => "embedded_example",
            PotentialFamily::ResonanceExample { .. } => "resonance_example",
            PotentialFamily::Tabulated { .. } => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub family: PotentialFamily,
    /// Claimed decay exponent; recorded, not enforced.
    pub mu: f64,
    /// Overall multiplier applied after sampling.
    pub coupling: f64,
    pub sampling: ResonanceSampling,
}

impl PotentialSpec {
    pub const DEFAULT_MU: f64 = 32.0;

    pub fn new(family: PotentialFamily) -> PotentialSpec {
        PotentialSpec { family, mu: Self::DEFAULT_MU, coupling: 1.0, sampling: ResonanceSampling::Collocated }
    }

    pub fn zero() -> Self {
        Self::new(PotentialFamily::Zero)
    }

    pub fn scaled_sech2(a: f64) -> Self {
        Self::new(PotentialFamily::ScaledSech2 { a })
    }

    pub fn embedded_example() -> Self {
        Self::new(PotentialFamily::EmbeddedExample)
    }

    pub fn resonance_example(c: f64, d: f64) -> Self {
        Self::new(PotentialFamily::ResonanceExample { c, d })
    }

    pub fn with_sampling(mut self, sampling: ResonanceSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(BeamError::invalid("potential.params.mu", "claimed decay exponent must be > 0"));
        }
        if !self.coupling.is_finite() {
            return Err(BeamError::invalid("potential.params.coupling", "must be finite"));
        }
        match &self.family {
            PotentialFamily::ScaledSech2 { a } if !a.is_finite() => {
                Err(BeamError::invalid("potential.params.a", "must be finite"))
            }
            PotentialFamily::ResonanceExample { c, d } => {
                if !(*c >= 0.0 && *d >= 0.0) {
                    Err(BeamError::invalid("potential.params", "resonance_example needs c >= 0 and d >= 0"))
                } else if *c == 0.0 && *d == 0.0 {
                    Err(BeamError::invalid("potential.params", "resonance_example needs (c, d) != (0, 0)"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// `V`, `v = √|V|`, `U = sgn V` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSample {
    pub grid: Grid,
    pub potential: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl PotentialSample {
    /// Split into `(v, U)` and recombine, so `V == U·v²` holds bit-for-bit.
    pub fn from_values(grid: Grid, values: &[f64]) -> Result<PotentialSample> {
        if values.len() != grid.n {
            return Err(BeamError::invalid("potential", format!("{} values for {} nodes", values.len(), grid.n)));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(BeamError::numerical("nonfinite_potential", format!("V(x_{i}) is not finite")));
        }
        let v: Vec<f64> = values.iter().map(|x| x.abs().sqrt()).collect();
        let u: Vec<f64> = values
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
            .collect();
        let potential = u.iter().zip(&v).map(|(s, w)| s * w * w).collect();
        Ok(PotentialSample { grid, potential, v, u })
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|&s| s == 0.0)
    }

    /// Nodes where `V ≠ 0`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.grid.n).filter(|&i| self.u[i] != 0.0).collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.potential.iter().map(|x| x.abs()).sum::<f64>() * self.grid.h
    }

    pub fn sup_norm(&self) -> f64 {
        self.potential.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> Result<PotentialSample> {
    spec.validate()?;
    let xs = grid.nodes();
    let mut values: Vec<f64> = match &spec.family {
        PotentialFamily::Zero => vec![0.0; grid.n],
        PotentialFamily::ScaledSech2 { a } => xs.iter().map(|&x| a * sech2(x)).collect(),
        PotentialFamily::EmbeddedExample => xs
            .iter()
            .map(|&x| {
                let s = sech2(x);
                20.0 * s - 24.0 * s * s
            })
            .collect(),
        PotentialFamily::ResonanceExample { c, d } => {
            let blend = Blend::new(*c, *d);
            match spec.sampling {
                ResonanceSampling::Analytic => analytic_resonance(&blend, &xs)?,
                ResonanceSampling::Collocated => collocated_resonance(&blend, grid)?,
            }
        }
        PotentialFamily::Tabulated { file } => tabulated(file, &xs)?,
    };
    if spec.coupling != 1.0 {
        values.iter_mut().for_each(|x| *x *= spec.coupling);
    }
    PotentialSample::from_values(*grid, &values)
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn analytic_resonance(blend: &Blend, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            if x.abs() >= 1.0 {
                return Ok(0.0);
            }
            let phi = blend.phi(x);
            if phi.abs() < 1e-12 {
                return Err(BeamError::numerical("division_guard", format!("phi_1 vanishes at x = {x}")));
            }
            Ok(-blend.phi_derivative(x, 4) / phi)
        })
        .collect()
}

/// Grid-consistent sampling of `V = −Δ²φ₁/φ₁`.
///
/// `g = −Δ²φ₁` on the support nodes has its low discrete moments removed, `φ` is rebuilt
/// as `−G₀(h g)` plus the best-fitting affine (or constant) part, and `V = g/φ`. Then
/// `v·φ` is an exact null vector of the discrete `T₀` up to round-off.
fn collocated_resonance(blend: &Blend, grid: &Grid) -> Result<Vec<f64>> {
    let h = grid.h;
    let support: Vec<usize> = (0..grid.n).filter(|&i| grid.node(i).abs() < 1.0).collect();
    let xs: Vec<f64> = support.iter().map(|&i| grid.node(i)).collect();
    let k = xs.len();
    if k < 8 {
        return Err(BeamError::invalid("grid", "too few nodes inside [-1, 1] for the resonance example"));
    }
    let moments = if blend.c > 0.0 { 2 } else { 3 };

    let g0: Vec<f64> = xs.iter().map(|&x| -blend.phi_derivative(x, 4)).collect();
    let basis = DMatrix::from_fn(k, moments, |i, j| (1.0 - xs[i] * xs[i]).powi(4) * xs[i].powi(j as i32));
    let gram = DMatrix::from_fn(moments, moments, |a, b| (0..k).map(|i| h * xs[i].powi(a as i32) * basis[(i, b)]).sum::<f64>());
    let rhs = DVector::from_fn(moments, |a, _| (0..k).map(|i| h * xs[i].powi(a as i32) * g0[i]).sum::<f64>());
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| BeamError::numerical("singular_moment_system", "bump moment matrix is singular"))?;
    let g: Vec<f64> = (0..k).map(|i| g0[i] - (0..moments).map(|j| basis[(i, j)] * coef[j]).sum::<f64>()).collect();

    let u: Vec<f64> = (0..k)
        .map(|i| -(0..k).map(|j| g0_kernel(xs[i], xs[j]) * h * g[j]).sum::<f64>())
        .collect();
    let target: Vec<f64> = xs.iter().map(|&x| blend.phi(x)).collect();
    let phi: Vec<f64> = if blend.c > 0.0 {
        // least-squares a + b x against target − u
        let design = DMatrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let resid = DVector::from_fn(k, |i, _| target[i] - u[i]);
        let ab = (design.transpose() * &design)
            .lu()
            .solve(&(design.transpose() * resid))
            .ok_or_else(|| BeamError::numerical("singular_fit", "affine fit failed"))?;
        (0..k).map(|i| u[i] + ab[0] + ab[1] * xs[i]).collect()
    } else {
        let shift = (0..k).map(|i| target[i] - u[i]).sum::<f64>() / k as f64;
        u.iter().map(|x| x + shift).collect()
    };

    let mut values = vec![0.0; grid.n];
    for (idx, &node) in support.iter().enumerate() {
        if phi[idx].abs() < 1e-12 {
            return Err(BeamError::numerical("division_guard", format!("phi_1 vanishes at x = {}", xs[idx])));
        }
        values[node] = g[idx] / phi[idx];
    }
    Ok(values)
}

fn tabulated(file: &PathBuf, xs: &[f64]) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| BeamError::invalid("potential.params.file", format!("{}: {e}", file.display())))?;
    let mut table: Vec<(f64, f64)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() < 2 {
            continue;
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(x), Ok(v)) => table.push((x, v)),
            _ if table.is_empty() => continue, // header
            _ => return Err(BeamError::invalid("potential.params.file", format!("bad row `{line}`"))),
        }
    }
    if table.len() < 2 {
        return Err(BeamError::invalid("potential.params.file", "need at least two rows"));
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (table[0].0, table[table.len() - 1].0);
    if xs[0] < lo || xs[xs.len() - 1] > hi {
        return Err(BeamError::invalid(
            "potential.params.file",
            format!("table covers [{lo}, {hi}], grid needs [{}, {}]", xs[0], xs[xs.len() - 1]),
        ));
    }
    Ok(xs
        .iter()
        .map(|&x| {
            let j = table.partition_point(|p| p.0 <= x).clamp(1, table.len() - 1);
            let (x0, v0) = table[j - 1];
            let (x1, v1) = table[j];
            if x1 == x0 {
                v0
            } else {
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_grid;

    #[test]
    fn blend_matches_abs_to_fourth_order() {
        let a = resonance_blend_coefficients();
        let p = |d| even_poly_derivative(&a, 1.0, d);
        assert!((p(0) - 1.0).abs() < 1e-12);
        assert!((p(1) - 1.0).abs() < 1e-12);
        for d in 2..=4 {
            assert!(p(d).abs() < 1e-12, "derivative {d}: {}", p(d));
        }
        assert!(a[0] > 0.0);
    }

    #[test]
    fn blend_solves_matching_system_independently() {
        // rows: derivative order 0..4 of x^{2k} at x = 1
        let m = DMatrix::from_fn(5, 5, |d, k| {
            let p = 2 * k as i32;
            if p < d as i32 {
                0.0
            } else {
                (0..d as i32).map(|j| (p - j) as f64).product()
            }
        });
        let rhs = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        let sol = m.lu().solve(&rhs).unwrap();
        for (k, a) in resonance_blend_coefficients().iter().enumerate() {
            assert!((sol[k] - a).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_derivative_agrees_with_finite_differences() {
        let b = Blend::new(1.0, 1.0);
        let h = 1e-2;
        for &x in &[-0.7, -0.2, 0.1, 0.55] {
            let fd = (b.phi(x + 2.0 * h) - 4.0 * b.phi(x + h) + 6.0 * b.phi(x) - 4.0 * b.phi(x - h)
                + b.phi(x - 2.0 * h))
                / h.powi(4);
            assert!((fd - b.phi_derivative(x, 4)).abs() < 1e-2 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn embedded_value_at_origin() {
        let g = build_grid(20.0, 256).unwrap();
        let s = sample_potential(&PotentialSpec::embedded_example(), &g).unwrap();
        assert_eq!(s.potential[g.nearest(0.0)], -4.0);
        for i in 1..g.n {
            assert!((s.potential[i] - s.potential[g.n - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_family_is_zero() {
        let g = build_grid(10.0, 64).unwrap();
        let s = sample_potential(&PotentialSpec::zero(), &g).unwrap();
        assert!(s.is_zero());
        assert!(s.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resonance_examples_supported_in_unit_interval() {
        let g = build_grid(8.0, 256).unwrap();
        for spec in [PotentialSpec::resonance_example(1.0, 1.0), PotentialSpec::resonance_example(0.0, 1.0)] {
            for sampling in [ResonanceSampling::Collocated, ResonanceSampling::Analytic] {
                let s = sample_potential(&spec.clone().with_sampling(sampling), &g).unwrap();
                for i in 0..g.n {
                    if g.node(i).abs() > 1.0 + g.h {
                        assert!(s.potential[i].abs() <= 1e-12);
                    }
                }
                assert!(!s.is_zero());
            }
        }
    }

    #[test]
    fn collocated_close_to_analytic() {
        let g = build_grid(8.0, 512).unwrap();
        let spec = PotentialSpec::resonance_example(1.0, 1.0);
        let a = sample_potential(&spec.clone().with_sampling(ResonanceSampling::Analytic), &g).unwrap();
        let c = sample_potential(&spec, &g).unwrap();
        let diff = a.potential.iter().zip(&c.potential).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff / a.sup_norm() < 1e-2, "{}", diff / a.sup_norm());
    }

    #[test]
    fn invalid_resonance_parameters() {
        let g = build_grid(8.0, 64).unwrap();
        assert!(sample_potential(&PotentialSpec::resonance_example(0.0, 0.0), &g).is_err());
        assert!(sample_potential(&PotentialSpec::resonance_example(-1.0, 1.0), &g).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_checks_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "x,V\n-20,0\n0,-2\n20,0\n").unwrap();
        let g = build_grid(10.0, 64).unwrap();
        let s = sample_potential(&PotentialSpec::new(PotentialFamily::Tabulated { file: path.clone() }), &g).unwrap();
        assert!((s.potential[g.nearest(0.0)] + 2.0).abs() < 1e-12);
        assert!((s.potential[0] + 1.0).abs() < 1e-12);
        let wide = build_grid(30.0, 64).unwrap();
        assert!(sample_potential(&PotentialSpec::new(PotentialFamily::Tabulated { file: path }), &wide).is_err());
    }
}
