//! Zero-energy machinery: `T₀ = U + vG₀v`, the moment projections, resonance
//! classification, the Birman–Schwinger matrix `M^±(λ) = U + vR₀^±(λ⁴)v`, and probes of
//! the small-λ orders of `M⁻¹` and `Q_α vR₀`.
//!
//! All operators act on the support of `V` (nodes with `U ≠ 0`), symmetrised with
//! `ṽ = √h·v` so that the h-weighted inner product becomes the Euclidean one.

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::freekernel::{f, g0_kernel, regular_part, Sign};
use crate::model::PotentialSample;
use crate::propagator::{linear_fit, LinearFit};

type CMat = DMatrix<Complex64>;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Below this λ the bordered system is used, above it the plain `M`.
pub const BORDERED_SWITCH: f64 = 1.0;

/// Matrix acting on grid functions restricted to the support of `V`,
/// symmetrised as `√h·K(x_i, x_j)·√h`.
#[derive(Debug, Clone)]
pub struct NystromOperator<T: nalgebra::Scalar> {
    pub matrix: DMatrix<T>,
    /// Support nodes (grid indices).
    pub support: Vec<usize>,
    pub xs: Vec<f64>,
}

/// Support data shared by every operator here.
#[derive(Debug, Clone)]
pub struct SupportData {
    pub support: Vec<usize>,
    pub xs: Vec<f64>,
    /// `√h·v` on the support.
    pub vt: Vec<f64>,
    pub u: Vec<f64>,
}

impl SupportData {
    pub fn new(sample: &PotentialSample) -> SupportData {
        let support = sample.support();
        let sh = sample.grid.h.sqrt();
        SupportData {
            xs: support.iter().map(|&i| sample.grid.node(i)).collect(),
            vt: support.iter().map(|&i| sh * sample.v[i]).collect(),
            u: support.iter().map(|&i| sample.u[i]).collect(),
            support,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Columns `[ṽ, xṽ, x²ṽ]`.
    pub fn moments(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 3, |i, k| self.xs[i].powi(k as i32) * self.vt[i])
    }
}

pub fn build_t0(sample: &PotentialSample) -> NystromOperator<f64> {
    let s = SupportData::new(sample);
    let k = s.len();
    let matrix = DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { s.u[i] } else { 0.0 };
        d + g0_kernel(s.xs[i], s.xs[j]) * (s.vt[i] * s.vt[j])
    });
    NystromOperator { matrix, support: s.support, xs: s.xs }
}

/// Orthogonal projections built from the moments `ṽ, xṽ, x²ṽ`.
#[derive(Debug, Clone)]
pub struct Projectors {
    /// Orthonormal moment basis (Gram–Schmidt order), k × 3.
    pub basis: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub q3: DMatrix<f64>,
    pub gram_condition: f64,
}

impl Projectors {
    /// `Q_α` for α = 0..3 (`Q₀ = I`).
    pub fn q(&self, alpha: u32) -> DMatrix<f64> {
        match alpha {
            0 => DMatrix::identity(self.p.nrows(), self.p.ncols()),
            1 => self.q1.clone(),
            2 => self.q2.clone(),
            _ => self.q3.clone(),
        }
    }
}

pub fn moment_projectors(sample: &PotentialSample) -> Result<Projectors> {
    let s = SupportData::new(sample);
    if s.is_empty() {
        return Err(BeamError::invalid("potential", "zero potential has no moment projections"));
    }
    let z = s.moments();
    let gram = z.transpose() * &z;
    let sv = gram.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= 1e12) {
        return Err(BeamError::numerical("dependent_moments", format!("moment Gram condition {cond:.3e}")));
    }
    // modified Gram–Schmidt, twice for stability
    let k = s.len();
    let mut basis = DMatrix::<f64>::zeros(k, 3);
    for c in 0..3 {
        let mut col = z.column(c).into_owned();
        for _ in 0..2 {
            for p in 0..c {
                let e = basis.column(p).into_owned();
                let dot = e.dot(&col);
                col -= e * dot;
            }
        }
        let n = col.norm();
        basis.set_column(c, &(col / n));
    }
    let proj = |cols: usize| {
        let b = basis.columns(0, cols);
        b * b.transpose()
    };
    let id = DMatrix::<f64>::identity(k, k);
    let p = proj(1);
    Ok(Projectors { q1: &id - &p, q2: &id - proj(2), q3: &id - proj(3), p, basis, gram_condition: cond })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Regular,
    FirstKind,
    SecondKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    pub q20_dim: usize,
    pub q3_dim: usize,
    /// Singular values normalised by the largest one, descending.
    pub q20_spectrum: Vec<f64>,
    pub q3_spectrum: Vec<f64>,
    pub rank_tol: f64,
    pub classification: Classification,
    /// Some normalised singular value lies within a factor 10 of `rank_tol`.
    pub ambiguous: bool,
    pub lambda0: Option<f64>,
    pub support_size: usize,
}

fn normalized_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv[0];
    if top == 0.0 {
        return sv;
    }
    sv.iter().map(|s| s / top).collect()
}

fn nullity(spec: &[f64], rank_tol: f64) -> usize {
    spec.iter().filter(|&&s| s < rank_tol).count()
}

fn near_threshold(spec: &[f64], rank_tol: f64) -> bool {
    spec.iter().any(|&s| s >= rank_tol / 10.0 && s <= rank_tol * 10.0)
}

/// `Q₂⁰` and `Q₃` dimensions via orthonormal complements of the moment spans.
///
/// `q20 = nullity(B₂ᵀT₀B₂)`, `q3 = nullity((I − P)T₀B₃)` where `B₂`, `B₃` span
/// `{ṽ, xṽ}^⊥` and `{ṽ, xṽ, x²ṽ}^⊥`.
pub fn compute_resonance_subspaces(
    t0: &NystromOperator<f64>,
    proj: &Projectors,
    rank_tol: f64,
) -> Result<ResonanceReport> {
    let k = t0.matrix.nrows();
    if k < 4 || proj.basis.nrows() != k {
        return Err(BeamError::invalid("support", "need at least four support nodes and matching projectors"));
    }
    // full orthonormal basis whose first three columns span the moments
    let qr = proj.basis.clone().qr();
    let mut qt = DMatrix::<f64>::identity(k, k);
    qr.q_tr_mul(&mut qt);
    let full = qt.transpose();
    let b2 = full.columns(2, k - 2).into_owned();
    let b3 = full.columns(3, k - 3).into_owned();
    let a2 = b2.transpose() * &t0.matrix * &b2;
    let a3 = &proj.q1 * &t0.matrix * &b3;
    let s2 = normalized_spectrum(&a2);
    let s3 = normalized_spectrum(&a3);
    let q20_dim = nullity(&s2, rank_tol);
    let q3_dim = nullity(&s3, rank_tol);
    let classification = if q20_dim == 0 {
        Classification::Regular
    } else if q3_dim == 0 {
        Classification::FirstKind
    } else {
        Classification::SecondKind
    };
    Ok(ResonanceReport {
        q20_dim,
        q3_dim,
        ambiguous: near_threshold(&s2, rank_tol) || near_threshold(&s3, rank_tol),
        q20_spectrum: s2,
        q3_spectrum: s3,
        rank_tol,
        classification,
        lambda0: None,
        support_size: k,
    })
}

/// Convenience: T₀, projectors and the report in one go.
pub fn classify(sample: &PotentialSample, rank_tol: f64) -> Result<ResonanceReport> {
    let t0 = build_t0(sample);
    let proj = moment_projectors(sample)?;
    compute_resonance_subspaces(&t0, &proj, rank_tol)
}

/// `U + vR₀^±(λ⁴)v` on the support.
pub fn build_m(sample: &PotentialSample, lambda: f64, sign: Sign) -> Result<NystromOperator<Complex64>> {
    if !(lambda > 0.0) {
        return Err(BeamError::invalid("lambda", "must be positive"));
    }
    let s = SupportData::new(sample);
    if s.is_empty() {
        return Err(BeamError::invalid("potential", "zero potential"));
    }
    let matrix = plain_m(&s, lambda, sign);
    Ok(NystromOperator { matrix, support: s.support, xs: s.xs })
}

fn plain_m(s: &SupportData, lambda: f64, sign: Sign) -> CMat {
    let k = s.len();
    let c = 1.0 / (4.0 * lambda.powi(3));
    CMat::from_fn(k, k, |i, j| {
        let d = if i == j { s.u[i] } else { 0.0 };
        let r0 = f(sign, lambda * (s.xs[i] - s.xs[j]).abs()) * c;
        d + r0 * (s.vt[i] * s.vt[j])
    })
}

/// Regular part `K = R₀ − Π` of the free resolvent, with
/// `Π(x, y) = aλ⁻³ + bλ⁻¹(x − y)²`.
fn kernel_regular(lambda: f64, sign: Sign, x: f64, y: f64) -> Complex64 {
    regular_part(sign, lambda * (x - y).abs()) / (4.0 * lambda.powi(3))
}

fn singular_coefficients(sign: Sign) -> (Complex64, Complex64) {
    let a = (sign.i() - 1.0) / 4.0;
    let b = -Complex64::new(1.0, sign.value()) / 8.0;
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Bordered,
    Plain,
}

/// Factorised Birman–Schwinger system at one `(λ, ±)`.
///
/// At small λ it solves the bordered system
/// `[[U + ṽKṽ, Ψ], [Ψᵀ, −Λ⁻¹]]` with `Ψ = [ṽ, xṽ, x²ṽ]`, which carries the singular
/// `λ⁻³, λ⁻¹` part of `R₀` exactly and avoids cancellation in `R₀ − R₀vM⁻¹vR₀`.
pub struct BsFactor {
    pub lambda: f64,
    pub sign: Sign,
    mode: Mode,
    lu: LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    support: SupportData,
    /// Scaling of the last bordered unknown (keeps the system balanced).
    scale: f64,
}

impl BsFactor {
    pub fn new(support: &SupportData, lambda: f64, sign: Sign) -> Result<BsFactor> {
        Self::with_mode(support, lambda, sign, if lambda < BORDERED_SWITCH { Mode::Bordered } else { Mode::Plain })
    }

    /// Force the plain `M` path (used to cross-check the bordered one).
    pub fn plain(support: &SupportData, lambda: f64, sign: Sign) -> Result<BsFactor> {
        Self::with_mode(support, lambda, sign, Mode::Plain)
    }

    /// Force the bordered path.
    pub fn bordered(support: &SupportData, lambda: f64, sign: Sign) -> Result<BsFactor> {
        Self::with_mode(support, lambda, sign, Mode::Bordered)
    }

    fn with_mode(support: &SupportData, lambda: f64, sign: Sign, mode: Mode) -> Result<BsFactor> {
        if !(lambda > 0.0) {
            return Err(BeamError::invalid("lambda", "must be positive"));
        }
        if support.is_empty() {
            return Err(BeamError::invalid("potential", "zero potential"));
        }
        let s = support;
        let k = s.len();
        let scale = lambda.sqrt();
        let matrix = match mode {
            Mode::Plain => plain_m(s, lambda, sign),
            Mode::Bordered => {
                let (a, b) = singular_coefficients(sign);
                let mut m = CMat::zeros(k + 3, k + 3);
                for i in 0..k {
                    for j in 0..k {
                        let d = if i == j { s.u[i] } else { 0.0 };
                        m[(i, j)] = kernel_regular(lambda, sign, s.xs[i], s.xs[j]) * (s.vt[i] * s.vt[j]) + d;
                    }
                    for p in 0..3 {
                        let sc = if p == 2 { scale } else { 1.0 };
                        let val = Complex64::new(s.xs[i].powi(p as i32) * s.vt[i] * sc, 0.0);
                        m[(i, k + p)] = val;
                        m[(k + p, i)] = val;
                    }
                }
                // −Λ⁻¹ with the last unknown scaled by √λ
                let l = lambda;
                m[(k, k + 2)] = -(l / b) * scale;
                m[(k + 2, k)] = -(l / b) * scale;
                m[(k + 1, k + 1)] = l / (2.0 * b);
                m[(k + 2, k + 2)] = a / (b * b * l) * (scale * scale);
                m
            }
        };
        let lu = matrix.lu();
        if !lu.is_invertible() {
            return Err(BeamError::numerical("singular_m", format!("Birman-Schwinger matrix singular at lambda = {lambda}")));
        }
        Ok(BsFactor { lambda, sign, mode, lu, support: s.clone(), scale })
    }

    fn columns(&self, pts: &[f64]) -> CMat {
        let s = &self.support;
        let k = s.len();
        let l = self.lambda;
        match self.mode {
            Mode::Plain => {
                let c = 1.0 / (4.0 * l.powi(3));
                CMat::from_fn(k, pts.len(), |i, q| f(self.sign, l * (s.xs[i] - pts[q]).abs()) * (c * s.vt[i]))
            }
            Mode::Bordered => CMat::from_fn(k + 3, pts.len(), |i, q| {
                let p = pts[q];
                if i < k {
                    kernel_regular(l, self.sign, s.xs[i], p) * s.vt[i]
                } else {
                    let e = (i - k) as i32;
                    let sc = if e == 2 { self.scale } else { 1.0 };
                    Complex64::new(p.powi(e) * sc, 0.0)
                }
            }),
        }
    }

    /// `R_V^±(λ⁴)(x_a, y_b)` on arbitrary points of ℝ.
    pub fn resolvent(&self, xa: &[f64], yb: &[f64]) -> Result<CMat> {
        let cx = self.columns(xa);
        let cy = self.columns(yb);
        let sol = self
            .lu
            .solve(&cy)
            .ok_or_else(|| BeamError::numerical("singular_m", format!("solve failed at lambda = {}", self.lambda)))?;
        let corr = cx.transpose() * sol;
        let l = self.lambda;
        let free = |x: f64, y: f64| match self.mode {
            Mode::Plain => f(self.sign, l * (x - y).abs()) / (4.0 * l.powi(3)),
            Mode::Bordered => kernel_regular(l, self.sign, x, y),
        };
        let out = CMat::from_fn(xa.len(), yb.len(), |a, b| free(xa[a], yb[b]) - corr[(a, b)]);
        if out.iter().any(|z| !z.is_finite()) {
            return Err(BeamError::numerical("nonfinite_resolvent", format!("lambda = {}", self.lambda)));
        }
        Ok(out)
    }

    /// `(M^±(λ))⁻¹` on the support.
    pub fn m_inverse(&self) -> Result<CMat> {
        let k = self.support.len();
        let rows = match self.mode {
            Mode::Plain => k,
            Mode::Bordered => k + 3,
        };
        let mut rhs = CMat::zeros(rows, k);
        for i in 0..k {
            rhs[(i, i)] = ONE;
        }
        let sol = self.lu.solve(&rhs).ok_or_else(|| BeamError::numerical("singular_m", "inverse failed"))?;
        Ok(sol.rows(0, k).into_owned())
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    m.clone().singular_values().max()
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderProbe {
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    /// λ values excluded from the fit.
    pub dropped: Vec<f64>,
    pub fit: LinearFit,
}

/// Slope of `log‖(M⁺(λ))⁻¹‖₂` against `log λ`.
pub fn minv_blowup_probe(sample: &PotentialSample, lambdas: &[f64]) -> Result<OrderProbe> {
    let s = SupportData::new(sample);
    if s.is_empty() {
        return Err(BeamError::invalid("potential", "zero potential"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(BeamError::invalid("lambda_list", "values must be positive"));
    }
    let vnorm2: f64 = s.vt.iter().map(|x| x * x).sum();
    let results: Vec<(f64, Option<f64>)> = lambdas
        .par_iter()
        .map(|&l| {
            let norm = BsFactor::new(&s, l, Sign::Plus).and_then(|fct| fct.m_inverse()).map(|inv| spectral_norm(&inv));
            (l, norm.ok())
        })
        .collect();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut dropped = Vec::new();
    for (l, n) in results {
        match n {
            Some(n) if n.is_finite() && n > 0.0 => pts.push((l, n)),
            _ => dropped.push(l),
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // drop the two smallest λ when they sit near the round-off ceiling 1/(ε‖M‖)
    for _ in 0..2 {
        if let Some(&(l, n)) = pts.first() {
            let m_norm = 1.0 + vnorm2 * (0.25 * 2f64.sqrt()) / l.powi(3);
            let ceiling = 1.0 / (f64::EPSILON * m_norm);
            if n * 10.0 >= ceiling {
                dropped.push(l);
                pts.remove(0);
            }
        }
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(OrderProbe { lambdas: pts.iter().map(|p| p.0).collect(), norms: pts.iter().map(|p| p.1).collect(), dropped, fit })
}

/// Far test-function domain for [`cancellation_probe`].
#[derive(Debug, Clone, Copy)]
pub struct FarDomain {
    /// Extent as a multiple of `1/λ_min`.
    pub reach: f64,
    /// Far spacing as a fraction of `π/λ_max`.
    pub spacing: f64,
}

impl Default for FarDomain {
    fn default() -> Self {
        FarDomain { reach: 100.0, spacing: 0.125 }
    }
}

/// Slope of `log‖Q_α vR₀⁺(λ⁴)‖₂` against `log λ`.
///
/// The operator maps functions of `y` on a long domain (grid nodes plus a far grid out
/// to `reach/λ_min`) to the support; the norm comes from the support-side Gram matrix.
pub fn cancellation_probe(sample: &PotentialSample, alpha: u32, lambdas: &[f64], far: FarDomain) -> Result<OrderProbe> {
    if alpha > 3 {
        return Err(BeamError::invalid("alpha", "must be 0..=3"));
    }
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(BeamError::invalid("lambda_list", "values must be positive"));
    }
    let s = SupportData::new(sample);
    let proj = moment_projectors(sample)?;
    let q = proj.q(alpha);
    let z = s.moments();
    for kdeg in 0..alpha as usize {
        let col = z.column(kdeg).into_owned();
        let res = (&q * &col).norm();
        if res > 1e-10 * col.norm() {
            return Err(BeamError::numerical("moment_annihilation", format!("|Q_{alpha} x^{kdeg} v| = {res:.3e}")));
        }
    }

    let grid = sample.grid;
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    let mut ys: Vec<(f64, f64)> = (0..grid.n).map(|i| (grid.node(i), grid.h)).collect();
    let reach = far.reach / lmin;
    let step = far.spacing * std::f64::consts::PI / lmax;
    let mut y = grid.half_length + step;
    while y <= reach {
        ys.push((y, step));
        ys.push((-y, step));
        y += step;
    }
    let qc: CMat = q.map(|x| Complex64::new(x, 0.0));
    let k = s.len();
    let norms: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| {
            let c = 1.0 / (4.0 * l.powi(3));
            let mut gram = CMat::zeros(k, k);
            let mut col = DVector::<Complex64>::zeros(k);
            for &(yv, w) in &ys {
                for i in 0..k {
                    col[i] = f(Sign::Plus, l * (s.xs[i] - yv).abs()) * (c * s.vt[i]);
                }
                let qcol = &qc * &col;
                gram.ger(Complex64::new(w, 0.0), &qcol, &qcol.map(|z| z.conj()), ONE);
            }
            gram.singular_values().max().sqrt()
        })
        .collect();
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let lys: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let fit = linear_fit(&xs, &lys)?;
    Ok(OrderProbe { lambdas: lambdas.to_vec(), norms, dropped: Vec::new(), fit })
}

/// Largest `2^{-k}` (k ≥ 0) with `cond M⁺(λ) < 10⁶` for `λ⁴` across `[λ₀, 2λ₀]`.
pub fn auto_lambda0(sample: &PotentialSample) -> Result<f64> {
    let s = SupportData::new(sample);
    if s.is_empty() {
        return Ok(1.0);
    }
    for k in 0..60 {
        let l0 = 0.5f64.powi(k);
        let ok = (0..5).all(|j| {
            let mu = l0 * (1.0 + j as f64 / 4.0);
            let sv = plain_m(&s, mu.powf(0.25), Sign::Plus).singular_values();
            sv.max() / sv.min() < 1e6
        });
        if ok {
            return Ok(l0);
        }
    }
    Err(BeamError::numerical("no_lambda0", "no admissible lambda0 down to 2^-59"))
}
