//! Dense pseudospectral realisation of `H = Δ² + V` on the periodic grid, its
//! eigen-decomposition, bound-state bookkeeping and the spectral-route propagator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::model::{CutoffSpec, Grid, PotentialSample};
use crate::propagator::{Band, KernelKind, KernelSlice, Route};

/// Participation-ratio threshold below which a nonnegative mode counts as localised.
pub const DEFAULT_PR_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: DMatrix<f64>,
    pub mass: f64,
    pub grid: Grid,
}

/// Circulant `Δ²` (first column `c_d = n⁻¹ Σ_j k_j⁴ cos(2πjd/n)`) plus `diag V`.
pub fn build_hamiltonian(grid: &Grid, sample: &PotentialSample) -> Result<DiscreteOperator> {
    if sample.grid != *grid || sample.potential.len() != grid.n {
        return Err(BeamError::invalid("sample", "potential sample lives on a different grid"));
    }
    let n = grid.n;
    let k4: Vec<f64> = grid.wavenumbers().iter().map(|k| k.powi(4)).collect();
    let column: Vec<f64> = (0..n)
        .map(|d| {
            let s: f64 = (0..n)
                .map(|j| k4[j] * (2.0 * PI * ((j * d) % n) as f64 / n as f64).cos())
                .sum();
            s / n as f64
        })
        .collect();
    let mut matrix = DMatrix::from_fn(n, n, |i, l| column[(i + n - l) % n]);
    for i in 0..n {
        matrix[(i, i)] += sample.potential[i];
    }
    // exact symmetry
    for i in 0..n {
        for l in 0..i {
            let a = 0.5 * (matrix[(i, l)] + matrix[(l, i)]);
            matrix[(i, l)] = a;
            matrix[(l, i)] = a;
        }
    }
    Ok(DiscreteOperator { matrix, mass: 0.0, grid: *grid })
}

impl DiscreteOperator {
    pub fn with_mass(mut self, m: f64) -> Self {
        self.mass = m;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundState {
    pub index: usize,
    pub eigenvalue: f64,
    pub participation_ratio: f64,
    pub negative: bool,
    pub localized: bool,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub grid: Grid,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Euclidean-orthonormal columns; `ψ_j = column / √h` is orthonormal in the h-weighted product.
    pub eigenvectors: DMatrix<f64>,
    pub participation: Vec<f64>,
    pub bound_state_indices: Vec<usize>,
    pub pr_threshold: f64,
}

pub fn eigendecompose(op: &DiscreteOperator) -> Result<SpectralData> {
    if op.matrix.iter().any(|x| !x.is_finite()) {
        return Err(BeamError::numerical("nonfinite_operator", "Hamiltonian has non-finite entries"));
    }
    let n = op.grid.n;
    let eig = SymmetricEigen::try_new(op.matrix.clone(), 1e-15, 0)
        .ok_or_else(|| BeamError::numerical("eigensolver_failure", "symmetric eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    let participation = (0..n)
        .map(|j| {
            let col = eigenvectors.column(j);
            let s2: f64 = col.iter().map(|x| x * x).sum();
            let s4: f64 = col.iter().map(|x| x.powi(4)).sum();
            s2 * s2 / (n as f64 * s4)
        })
        .collect();
    let mut sd = SpectralData {
        grid: op.grid,
        eigenvalues,
        eigenvectors,
        participation,
        bound_state_indices: Vec::new(),
        pr_threshold: DEFAULT_PR_THRESHOLD,
    };
    sd.bound_state_indices = detect_bound_states(&sd, DEFAULT_PR_THRESHOLD).iter().map(|b| b.index).collect();
    Ok(sd)
}

/// Negative modes plus nonnegative modes with participation ratio below the threshold.
///
/// "Negative" means below `−1e−12·max|μ|`, so round-off around a zero mode does not count.
pub fn detect_bound_states(sd: &SpectralData, pr_threshold: f64) -> Vec<BoundState> {
    let floor = 1e-12 * sd.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (0..sd.eigenvalues.len())
        .filter_map(|j| {
            let negative = sd.eigenvalues[j] < -floor;
            let localized = sd.participation[j] < pr_threshold;
            (negative || localized).then(|| BoundState {
                index: j,
                eigenvalue: sd.eigenvalues[j],
                participation_ratio: sd.participation[j],
                negative,
                localized,
            })
        })
        .collect()
}

impl SpectralData {
    pub fn with_pr_threshold(mut self, pr_threshold: f64) -> Self {
        self.bound_state_indices = detect_bound_states(&self, pr_threshold).iter().map(|b| b.index).collect();
        self.pr_threshold = pr_threshold;
        self
    }

    fn is_bound(&self, j: usize) -> bool {
        self.bound_state_indices.binary_search(&j).is_ok()
    }

    /// Euclidean projector onto the non-bound eigenvectors.
    pub fn pac_projector(&self) -> DMatrix<f64> {
        let keep: Vec<usize> = (0..self.eigenvalues.len()).filter(|&j| !self.is_bound(j)).collect();
        let e = DMatrix::from_fn(self.grid.n, keep.len(), |i, c| self.eigenvectors[(i, keep[c])]);
        &e * e.transpose()
    }

    /// Normalised eigenfunction on the grid (`h Σ ψ² = 1`).
    pub fn eigenfunction(&self, j: usize) -> Vec<f64> {
        let s = self.grid.h.sqrt().recip();
        self.eigenvectors.column(j).iter().map(|x| x * s).collect()
    }

    /// Index of the eigenvalue nearest `target`.
    pub fn nearest_eigenvalue(&self, target: f64) -> usize {
        (0..self.eigenvalues.len())
            .min_by(|&a, &b| (self.eigenvalues[a] - target).abs().total_cmp(&(self.eigenvalues[b] - target).abs()))
            .unwrap_or(0)
    }
}

/// Finite-box validity window `L/(4λ_max)`.
pub fn finite_box_window(grid: &Grid, lambda_max: f64) -> f64 {
    grid.half_length / (4.0 * lambda_max)
}

/// Spectral-route kernel `Σ_{j∉bound} g(μ_j) ψ_j(x_a) ψ_j(y_b)`.
///
/// `points` must be grid nodes. `cutoff` applies χ₁ or χ₂ to the eigenvalues.
#[allow(clippy::too_many_arguments)]
pub fn propagate_spectral(
    sd: &SpectralData,
    t: f64,
    m: f64,
    kind: KernelKind,
    ell: f64,
    band: Band,
    cutoff: Option<CutoffSpec>,
    xs: &[f64],
    ys: &[f64],
) -> Result<KernelSlice> {
    let grid = sd.grid;
    let to_index = |p: f64| -> Result<usize> {
        let i = grid.nearest(p);
        if (grid.node(i) - p).abs() > 1e-9 * grid.h.max(1.0) {
            Err(BeamError::invalid("subgrid", format!("point {p} is not a grid node")))
        } else {
            Ok(i)
        }
    };
    let ia: Vec<usize> = xs.iter().map(|&p| to_index(p)).collect::<Result<_>>()?;
    let ib: Vec<usize> = ys.iter().map(|&p| to_index(p)).collect::<Result<_>>()?;
    let cut = match (band, cutoff) {
        (Band::Full, _) => None,
        (_, Some(c)) => Some(c),
        (_, None) => return Err(BeamError::invalid("cutoff", "low/high band needs lambda0")),
    };

    let mut weights = vec![Complex64::new(0.0, 0.0); sd.eigenvalues.len()];
    for (j, w) in weights.iter_mut().enumerate() {
        if sd.is_bound(j) {
            continue;
        }
        let mu = sd.eigenvalues[j];
        let e = mu + m * m;
        if e < 0.0 {
            // a negative mode outside the bound set means the P_ac bookkeeping is broken
            if e < -1e-9 * (1.0 + mu.abs()) {
                return Err(BeamError::numerical("unremoved_negative_mode", format!("mode {j} has mu + m^2 = {e}")));
            }
        }
        let e = e.max(0.0);
        let band_factor = match (band, cut) {
            (Band::Low, Some(c)) => c.chi1(mu.max(0.0)),
            (Band::High, Some(c)) => c.chi2(mu.max(0.0)),
            _ => 1.0,
        };
        if band_factor == 0.0 {
            continue;
        }
        let omega = e.sqrt();
        let g = match kind {
            KernelKind::Cos => Complex64::new((t * omega).cos() * power(e, ell), 0.0),
            KernelKind::SinOver => Complex64::new(if omega == 0.0 { t } else { (t * omega).sin() / omega }, 0.0),
            KernelKind::UnifiedExp => Complex64::from_polar(power(e, ell), -t * omega),
        };
        *w = g * band_factor;
    }

    let scale = grid.h.recip();
    let active: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] != Complex64::new(0.0, 0.0)).collect();
    let values = DMatrix::from_fn(ia.len(), ib.len(), |a, b| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &j in &active {
            acc += weights[j] * (sd.eigenvectors[(ia[a], j)] * sd.eigenvectors[(ib[b], j)]);
        }
        acc * scale
    });

    let lambda_max = match (band, cut) {
        (Band::Low, Some(c)) => c.lambda_max(),
        _ => PI * grid.n as f64 / (2.0 * grid.half_length),
    };
    let valid = t.abs() <= finite_box_window(&grid, lambda_max);
    Ok(KernelSlice {
        t,
        m,
        ell,
        kind,
        band,
        route: Route::Spectral,
        lambda0: cut.map(|c| c.lambda0),
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        values,
        valid,
    })
}

/// `e^{ℓ/2}` with `0^0 = 1`.
fn power(e: f64, ell: f64) -> f64 {
    if ell == 0.0 {
        1.0
    } else {
        e.powf(0.5 * ell)
    }
}
