//! Stone's-formula kernels of `cos(t√(H+m²))`, `sin(t√(H+m²))/√(H+m²)` and
//! `(H+m²)^{ℓ/2} e^{−it√(H+m²)}` restricted to `P_ac`, decay curves and exponent fits.
//!
//! With `J(λ) = λ³ Im R_V⁺(λ⁴)(x, y)` every kernel is
//! `(4/π) ∫₀^∞ g(t, λ) χ̃(λ) J(λ) dλ`, which the engine splits into Littlewood–Paley
//! pieces and integrates with Gauss–Legendre on a node set shared by a whole t-sweep.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::freekernel::{f as f_free, Sign};
use crate::model::{CutoffSpec, Grid, PotentialSample};
use crate::oscillatory::{chi_half, phi0};
use crate::quad::composite;
use crate::resonance::{BsFactor, SupportData};
use crate::spectral::{build_hamiltonian, eigendecompose, propagate_spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Cos,
    SinOver,
    UnifiedExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    High,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Stone,
    Spectral,
}

/// Kernel samples on `xs × ys` at one time.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub t: f64,
    pub m: f64,
    pub ell: f64,
    pub kind: KernelKind,
    pub band: Band,
    pub route: Route,
    pub lambda0: Option<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: DMatrix<Complex64>,
    /// Inside the finite-box window (always true on the Stone route, which lives on ℝ).
    pub valid: bool,
}

impl KernelSlice {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// `max |K(x_a, y_b) − K(y_b, x_a)|` over pairs present in both orders.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, &x) in self.xs.iter().enumerate() {
            for (b, &y) in self.ys.iter().enumerate() {
                let (Some(a2), Some(b2)) = (self.xs.iter().position(|&p| p == y), self.ys.iter().position(|&p| p == x))
                else {
                    continue;
                };
                worst = worst.max((self.values[(a, b)] - self.values[(a2, b2)]).norm());
            }
        }
        worst
    }

    pub fn real(&self) -> DMatrix<f64> {
        self.values.map(|z| z.re)
    }
}

/// Sample points: every pair `(x_a, y_b)` is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subgrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Subgrid {
    /// `2·half + 1` points `R·sgn(k)(k/half)²`, dense near 0, used for both coordinates.
    pub fn quadratic(radius: f64, half: usize) -> Subgrid {
        let half = half.max(1) as i64;
        let pts: Vec<f64> = (-half..=half)
            .map(|k| {
                let u = k as f64 / half as f64;
                radius * u.signum() * u * u
            })
            .map(|x| if x == 0.0 { 0.0 } else { x })
            .collect();
        Subgrid { xs: pts.clone(), ys: pts }
    }

    /// Default sweep subgrid: 33 points reaching `max(L/2, 1.1√(π t_max))`.
    pub fn for_sweep(grid: &Grid, t_max: f64) -> Subgrid {
        let r = (0.5 * grid.half_length).max(1.1 * (PI * t_max.abs()).sqrt());
        Subgrid::quadratic(r, 16)
    }

    /// Quadratic pattern of radius `max(scale·√(π|t|), L/2)`: the leading large-time
    /// kernel depends on `x/√t`, so sampling it self-similarly keeps the sup estimate
    /// consistent across a sweep.
    pub fn self_similar(grid: &Grid, t: f64, scale: f64, half: usize) -> Subgrid {
        Subgrid::quadratic((scale * (PI * t.abs()).sqrt()).max(0.5 * grid.half_length), half)
    }

    /// Grid nodes nearest to a quadratic pattern on `[−radius, radius]`, deduplicated.
    pub fn grid_nodes(grid: &Grid, radius: f64, half: usize) -> Subgrid {
        let q = Subgrid::quadratic(radius, half);
        let mut idx: Vec<usize> = q.xs.iter().map(|&x| grid.nearest(x)).collect();
        idx.dedup();
        let pts: Vec<f64> = idx.iter().map(|&i| grid.node(i)).collect();
        Subgrid { xs: pts.clone(), ys: pts }
    }

    pub fn reach(&self) -> f64 {
        let mx = self.xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let my = self.ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        mx + my
    }
}

/// `R_V^±(λ⁴)` on all grid nodes (`R₀` when `V ≡ 0`).
pub fn resolvent_v(sample: &PotentialSample, lambda: f64, sign: Sign) -> Result<DMatrix<Complex64>> {
    if !(lambda > 0.0) {
        return Err(BeamError::invalid("lambda", "must be positive"));
    }
    let nodes = sample.grid.nodes();
    if sample.is_zero() {
        let c = 1.0 / (4.0 * lambda.powi(3));
        return Ok(DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| f_free(sign, lambda * (nodes[i] - nodes[j]).abs()) * c));
    }
    BsFactor::new(&SupportData::new(sample), lambda, sign)?.resolvent(&nodes, &nodes)
}

/// Quadrature and truncation knobs of the Stone engine.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StoneSettings {
    /// Pieces without a stationary point are dropped once their phase range exceeds this.
    pub t_cut: f64,
    /// Nodes per π of phase.
    pub oversample: f64,
    pub min_nodes: usize,
    /// `J(λ)` is frozen below this λ.
    pub lambda_floor: f64,
    /// The base block `[0, 2^{n_lo}]` collects all pieces below.
    pub n_lo: i32,
    pub max_nodes: usize,
}

impl Default for StoneSettings {
    fn default() -> Self {
        StoneSettings { t_cut: 2000.0, oversample: 4.0, min_nodes: 32, lambda_floor: 1e-4, n_lo: -14, max_nodes: 1 << 22 }
    }
}

/// One kernel request shared by a t-sweep.
#[derive(Debug, Clone, Copy)]
pub struct KernelRequest {
    pub m: f64,
    pub ell: f64,
    pub kind: KernelKind,
    pub band: Band,
    pub cutoff: Option<CutoffSpec>,
}

impl KernelRequest {
    pub fn new(m: f64, kind: KernelKind, band: Band, cutoff: Option<CutoffSpec>) -> Self {
        KernelRequest { m, ell: 0.0, kind, band, cutoff }
    }

    pub fn with_ell(mut self, ell: f64) -> Self {
        self.ell = ell;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.m.is_finite() || self.m < 0.0 {
            return Err(BeamError::invalid("m", "must be finite and nonnegative"));
        }
        if !(self.ell == 0.0 || self.ell == -1.0) {
            return Err(BeamError::invalid("ell", "must be 0 or -1"));
        }
        if self.ell < 0.0 && self.m == 0.0 && self.kind != KernelKind::SinOver {
            return Err(BeamError::invalid("ell", "ell = -1 needs m > 0 (the λ-integral diverges at 0 otherwise)"));
        }
        if self.band != Band::Full && self.cutoff.is_none() {
            return Err(BeamError::invalid("cutoff", "low/high band needs lambda0"));
        }
        Ok(())
    }

    fn omega(&self, lambda: f64) -> f64 {
        (lambda.powi(4) + self.m * self.m).sqrt()
    }

    fn omega_prime(&self, lambda: f64) -> f64 {
        let w = self.omega(lambda);
        if w == 0.0 {
            0.0
        } else {
            2.0 * lambda.powi(3) / w
        }
    }

    /// `g(t, λ)`.
    fn g(&self, t: f64, lambda: f64) -> Complex64 {
        let e = lambda.powi(4) + self.m * self.m;
        let w = e.sqrt();
        let pw = if self.ell == 0.0 { 1.0 } else { e.powf(0.5 * self.ell) };
        match self.kind {
            KernelKind::Cos => Complex64::new((t * w).cos() * pw, 0.0),
            KernelKind::SinOver => Complex64::new(if w == 0.0 { t } else { (t * w).sin() / w }, 0.0),
            KernelKind::UnifiedExp => Complex64::from_polar(pw, -t * w),
        }
    }

    fn band_weight(&self, lambda: f64) -> f64 {
        match (self.band, self.cutoff) {
            (Band::Low, Some(c)) => c.chi1_tilde(lambda),
            (Band::High, Some(c)) => c.chi2_tilde(lambda),
            _ => 1.0,
        }
    }

    fn band_range(&self) -> (f64, f64) {
        match (self.band, self.cutoff) {
            (Band::Low, Some(c)) => (0.0, c.lambda_max()),
            (Band::High, Some(c)) => (c.lambda0.powf(0.25), f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }
}

/// Partial sums per Stone sweep; fixed so results do not depend on the worker count.
const REDUCTION_CHUNKS: usize = 256;

/// One quadrature node of the shared λ-set.
#[derive(Debug, Clone, Copy)]
struct Node {
    lambda: f64,
    weight: f64,
    piece: usize,
}

#[derive(Debug, Clone)]
struct Plan {
    nodes: Vec<Node>,
    /// `active[piece][t]`
    active: Vec<Vec<bool>>,
}

/// Whole-line Stone-route evaluator for one potential.
pub struct StoneEngine<'a> {
    pub sample: &'a PotentialSample,
    support: Option<SupportData>,
    pub settings: StoneSettings,
}

impl<'a> StoneEngine<'a> {
    pub fn new(sample: &'a PotentialSample) -> Self {
        let support = (!sample.is_zero()).then(|| SupportData::new(sample));
        StoneEngine { sample, support, settings: StoneSettings::default() }
    }

    pub fn with_settings(mut self, settings: StoneSettings) -> Self {
        self.settings = settings;
        self
    }

    /// `J(λ)(x_a, y_b) = λ³ Im R_V⁺(λ⁴)(x_a, y_b)`.
    pub fn jump(&self, lambda: f64, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let l = lambda.max(self.settings.lambda_floor);
        match &self.support {
            None => Ok(DMatrix::from_fn(xs.len(), ys.len(), |a, b| 0.25 * (l * (xs[a] - ys[b])).cos())),
            Some(s) => {
                let r = BsFactor::new(s, l, Sign::Plus)?.resolvent(xs, ys)?;
                let l3 = l.powi(3);
                Ok(r.map(|z| z.im * l3))
            }
        }
    }

    fn support_reach(&self) -> f64 {
        self.support.as_ref().map_or(0.0, |s| s.xs.iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }

    fn plan(&self, ts: &[f64], req: &KernelRequest, reach: f64) -> Result<Plan> {
        let st = &self.settings;
        let (band_lo, band_hi) = req.band_range();
        let phase_r = reach + 2.0 * self.support_reach();
        // stationary λ for the largest separation
        let stationary = |t: f64| -> f64 {
            let t = t.abs();
            if t == 0.0 {
                return f64::INFINITY;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            while t * req.omega_prime(hi) < phase_r {
                hi *= 2.0;
                if hi > 1e8 {
                    return f64::INFINITY;
                }
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if t * req.omega_prime(mid) < phase_r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let lam_star: Vec<f64> = ts.iter().map(|&t| stationary(t)).collect();

        let band_kinks: Vec<f64> = match (req.band, req.cutoff) {
            (Band::Full, _) | (_, None) => Vec::new(),
            (_, Some(c)) => vec![c.lambda0.powf(0.25), c.lambda_max()],
        };
        let mut nodes = Vec::new();
        let mut active = Vec::new();
        let mut add_piece = |lo: f64, hi: f64, mid: f64, weight: &dyn Fn(f64) -> f64, act: Vec<bool>, nodes: &mut Vec<Node>| -> Result<()> {
            let lo = lo.max(band_lo);
            let hi = hi.min(band_hi);
            if hi <= lo || !act.iter().any(|&a| a) {
                return Ok(());
            }
            let t_eff = ts.iter().zip(&act).filter(|(_, &a)| a).fold(0.0f64, |m, (t, _)| m.max(t.abs()));
            let phase = t_eff * (req.omega(hi) - req.omega(lo)) + phase_r * (hi - lo);
            let count = ((st.oversample * phase / PI).ceil() as usize).max(st.min_nodes);
            if count > st.max_nodes {
                return Err(BeamError::numerical(
                    "quadrature_nonconvergence",
                    format!("piece [{lo}, {hi}] needs {count} nodes (phase range {phase:.3e})"),
                ));
            }
            let piece = active.len();
            // split where the weights are only piecewise smooth, so each segment converges spectrally
            let mut cuts = vec![lo, hi, mid];
            cuts.extend(band_kinks.iter().copied());
            cuts.retain(|&c| c >= lo && c <= hi);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
            for seg in cuts.windows(2) {
                let share = ((count as f64 * (seg[1] - seg[0]) / (hi - lo)).ceil() as usize).max(16);
                for (x, w) in composite(seg[0], seg[1], share) {
                    let wt = w * weight(x) * req.band_weight(x);
                    if wt != 0.0 {
                        nodes.push(Node { lambda: x, weight: wt, piece });
                    }
                }
            }
            active.push(act);
            Ok(())
        };

        // base block: all pieces below n_lo telescoped into χ(2^{−n_lo}λ)
        let base = 2f64.powi(st.n_lo);
        add_piece(0.0, base, 0.5 * base, &|l| chi_half(l / base), vec![true; ts.len()], &mut nodes)?;
        let mut n = st.n_lo + 1;
        loop {
            let lo = 2f64.powi(n - 2);
            let hi = 2f64.powi(n);
            if lo >= band_hi {
                break;
            }
            let act: Vec<bool> = ts
                .iter()
                .zip(&lam_star)
                .map(|(&t, &ls)| {
                    let stationary_inside = lo <= 2.0 * ls;
                    let tame = t.abs() * (req.omega(hi) - req.omega(lo)) <= st.t_cut;
                    stationary_inside || tame
                })
                .collect();
            if !act.iter().any(|&a| a) {
                break;
            }
            let scale = 2f64.powi(-n);
            add_piece(lo, hi, 0.5 * hi, &|l| phi0(l * scale), act, &mut nodes)?;
            n += 1;
            if n > 60 {
                return Err(BeamError::numerical("dyadic_tail", "dyadic pieces did not terminate before 2^60"));
            }
        }
        Ok(Plan { nodes, active })
    }

    /// Kernels for every `t` in `ts`, sharing one λ-node set.
    pub fn kernels(&self, ts: &[f64], req: &KernelRequest, sub: &Subgrid) -> Result<Vec<KernelSlice>> {
        req.validate()?;
        if ts.iter().any(|t| !t.is_finite()) {
            return Err(BeamError::invalid("t", "must be finite"));
        }
        let plan = self.plan(ts, req, sub.reach())?;
        let (na, nb) = (sub.xs.len(), sub.ys.len());
        let zero = || vec![DMatrix::<Complex64>::zeros(na, nb); ts.len()];
        // fixed chunking and an ordered final sum keep the result independent of the thread count
        let chunk = plan.nodes.len().div_ceil(REDUCTION_CHUNKS).max(1);
        let partials = plan
            .nodes
            .par_chunks(chunk)
            .map(|nodes| -> Result<Vec<DMatrix<Complex64>>> {
                let mut acc = zero();
                for node in nodes {
                    let j = self.jump(node.lambda, &sub.xs, &sub.ys)?;
                    for (ti, &t) in ts.iter().enumerate() {
                        if !plan.active[node.piece][ti] {
                            continue;
                        }
                        let c = req.g(t, node.lambda) * node.weight;
                        acc[ti].zip_apply(&j, |a, jv| *a += c * jv);
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = zero();
        for p in partials {
            for (x, y) in acc.iter_mut().zip(p) {
                *x += y;
            }
        }
        let pref = 4.0 / PI;
        Ok(ts
            .iter()
            .zip(acc)
            .map(|(&t, v)| KernelSlice {
                t,
                m: req.m,
                ell: req.ell,
                kind: req.kind,
                band: req.band,
                route: Route::Stone,
                lambda0: req.cutoff.map(|c| c.lambda0),
                xs: sub.xs.clone(),
                ys: sub.ys.clone(),
                values: v * Complex64::new(pref, 0.0),
                valid: true,
            })
            .collect())
    }

    /// Number of λ nodes the plan would use (diagnostics).
    pub fn node_count(&self, ts: &[f64], req: &KernelRequest, sub: &Subgrid) -> Result<usize> {
        Ok(self.plan(ts, req, sub.reach())?.nodes.len())
    }
}

/// Single-time Stone kernel.
pub fn stone_kernel(sample: &PotentialSample, t: f64, req: &KernelRequest, sub: &Subgrid) -> Result<KernelSlice> {
    let mut v = StoneEngine::new(sample).kernels(&[t], req, sub)?;
    Ok(v.remove(0))
}

/// `sin(t√H)/√H P_ac = ½∫_{−t}^{t} cos(s√H) P_ac ds` (m = 0) by trapezoid slices in `s`.
///
/// Slices are geometric from `t·10^{−decades}` to `t` with `per_decade` per decade;
/// the innermost `[0, s_min]` uses the exact small-s λ-integral. `K(−s) = K(s)` halves
/// the work.
pub fn sin_over_sqrt_by_time_integral(
    sample: &PotentialSample,
    t: f64,
    sub: &Subgrid,
    per_decade: usize,
    decades: f64,
) -> Result<KernelSlice> {
    if t <= 0.0 {
        return Err(BeamError::invalid("t", "must be positive"));
    }
    if per_decade < 64 {
        return Err(BeamError::invalid("per_decade", "need at least 64 slices per decade"));
    }
    let engine = StoneEngine::new(sample);
    let cos = KernelRequest::new(0.0, KernelKind::Cos, Band::Full, None);
    let count = (decades * per_decade as f64).ceil() as usize;
    let s_min = t * 10f64.powf(-decades);
    let ss: Vec<f64> = (0..=count).map(|i| s_min * (t / s_min).powf(i as f64 / count as f64)).collect();
    let slices = engine.kernels(&ss, &cos, sub)?;
    let mut total = DMatrix::<Complex64>::zeros(sub.xs.len(), sub.ys.len());
    for w in 0..count {
        let ds = ss[w + 1] - ss[w];
        total += (&slices[w].values + &slices[w + 1].values) * Complex64::new(0.5 * ds, 0.0);
    }
    // ∫₀^{s_min} cos(sω) ds = sin(s_min ω)/ω exactly
    let head = engine.kernels(&[s_min], &KernelRequest::new(0.0, KernelKind::SinOver, Band::Full, None), sub)?;
    total += &head[0].values;
    Ok(KernelSlice {
        t,
        m: 0.0,
        ell: 0.0,
        kind: KernelKind::SinOver,
        band: Band::Full,
        route: Route::Stone,
        lambda0: None,
        xs: sub.xs.clone(),
        ys: sub.ys.clone(),
        values: total,
        valid: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(BeamError::invalid("fit", format!("need matching samples, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BeamError::invalid("fit", "abscissae are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if n > 2 { (ssr / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, stderr, points: n })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub points: Vec<(f64, f64)>,
    pub m: f64,
    pub kind: KernelKind,
    pub band: Band,
    pub lambda0: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Geometric times; for `m > 0` rounded to multiples of `2π/m` so the mass carrier
/// `cos(mt + ·)` is sampled at a fixed phase.
pub fn sweep_times(t_min: f64, t_max: f64, count: usize, m: f64) -> Vec<f64> {
    let count = count.max(2);
    let raw: Vec<f64> = (0..count).map(|i| t_min * (t_max / t_min).powf(i as f64 / (count - 1) as f64)).collect();
    if m <= 0.0 {
        return raw;
    }
    let period = 2.0 * PI / m;
    let mut out: Vec<f64> = raw.iter().map(|t| (t / period).round().max(1.0) * period).collect();
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

/// Sup-norm over the subgrid for every `t`.
pub fn decay_curve(engine: &StoneEngine, req: &KernelRequest, ts: &[f64], sub: &Subgrid) -> Result<DecayCurve> {
    if !sub.xs.contains(&0.0) || !sub.ys.contains(&0.0) {
        return Err(BeamError::invalid("subgrid", "must contain x = y = 0"));
    }
    let slices = engine.kernels(ts, req, sub)?;
    if let Some(s) = slices.iter().find(|s| !s.valid) {
        return Err(BeamError::invalid("t_list", format!("t = {} is outside the validity window", s.t)));
    }
    Ok(DecayCurve {
        points: slices.iter().map(|s| (s.t, s.sup_norm())).collect(),
        m: req.m,
        kind: req.kind,
        band: req.band,
        lambda0: req.cutoff.map(|c| c.lambda0),
    })
}

/// Subgrid following a travelling front: `x = 0` against `y ∈ [0, speed·t]` at the
/// given spacing. High-band kernels peak at `|x − y| ≈ t·ω'(λ₀^{1/4})`, outside any
/// fixed window for large `t`.
pub fn travelling_subgrid(t: f64, speed: f64, spacing: f64) -> Result<Subgrid> {
    if !(speed > 0.0 && spacing > 0.0) {
        return Err(BeamError::invalid("window", "speed and spacing must be positive"));
    }
    let count = (speed * t.abs() / spacing).ceil() as usize;
    if count > 1_000_000 {
        return Err(BeamError::invalid("window", format!("{count} points is too many")));
    }
    Ok(Subgrid { xs: vec![0.0], ys: (0..=count).map(|i| i as f64 * spacing).collect() })
}

/// Like [`decay_curve`], but with a separate subgrid for every `t`.
pub fn decay_curve_windowed(
    engine: &StoneEngine,
    req: &KernelRequest,
    ts: &[f64],
    window: impl Fn(f64) -> Result<Subgrid>,
) -> Result<DecayCurve> {
    let mut points = Vec::with_capacity(ts.len());
    for &t in ts {
        let sub = window(t)?;
        if !sub.xs.contains(&0.0) || !sub.ys.contains(&0.0) {
            return Err(BeamError::invalid("subgrid", "must contain x = y = 0"));
        }
        let k = engine.kernels(&[t], req, &sub)?;
        points.push((t, k[0].sup_norm()));
    }
    Ok(DecayCurve { points, m: req.m, kind: req.kind, band: req.band, lambda0: req.cutoff.map(|c| c.lambda0) })
}

/// Log-log least squares over the points inside `window` (all points if `None`).
pub fn fit_exponent(curve: &DecayCurve, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let pts: Vec<(f64, f64)> = curve.points.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
    if pts.len() < 8 {
        return Err(BeamError::invalid("fit_window", format!("need >= 8 points, got {}", pts.len())));
    }
    if pts.iter().any(|&(t, v)| !(t > 0.0 && v > 0.0)) {
        return Err(BeamError::invalid("curve", "times and sup-norms must be positive"));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    let t_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if (t_hi / t_lo).log10() < 1.5 {
        return Err(BeamError::invalid("fit_window", "fit window must span >= 1.5 decades"));
    }
    Ok(DecayFit { slope: fit.slope, intercept: fit.intercept, stderr: fit.stderr, window: (t_lo, t_hi), points: pts.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    pub discrepancy: f64,
    pub t: f64,
    pub m: f64,
    pub kind: KernelKind,
    pub lambda0: f64,
    pub padding: usize,
    pub points: usize,
    pub stone_sup: f64,
    pub spectral_sup: f64,
    pub bound_states_removed: usize,
}

/// Options for [`crossvalidate`].
#[derive(Debug, Clone, Copy)]
pub struct CrossOptions {
    /// Low-band `λ₀`; default puts `λ_max` on the window edge `L/(4t)`.
    pub lambda0: Option<f64>,
    /// Box enlargement of the spectral route (same spacing).
    pub padding: usize,
    pub half_points: usize,
}

impl Default for CrossOptions {
    fn default() -> Self {
        CrossOptions { lambda0: None, padding: 4, half_points: 8 }
    }
}

/// Stone route vs spectral route with the same low-energy cutoff.
pub fn crossvalidate(sample: &PotentialSample, t: f64, m: f64, kind: KernelKind, opts: CrossOptions) -> Result<CrossValidation> {
    let grid = sample.grid;
    if t == 0.0 || !t.is_finite() {
        return Err(BeamError::invalid("t", "must be nonzero and finite"));
    }
    let lambda0 = opts.lambda0.unwrap_or_else(|| 0.5 * (grid.half_length / (4.0 * t.abs())).powi(4));
    let cutoff = CutoffSpec::new(lambda0);
    if t.abs() > crate::spectral::finite_box_window(&grid, cutoff.lambda_max()) * (1.0 + 1e-12) {
        return Err(BeamError::invalid("t", "outside the finite-box window for this cutoff"));
    }
    let sub = Subgrid::grid_nodes(&grid, 0.25 * grid.half_length, opts.half_points);

    let padded = grid.padded(opts.padding);
    let offset = (padded.n - grid.n) / 2;
    let mut values = vec![0.0; padded.n];
    values[offset..offset + grid.n].copy_from_slice(&sample.potential);
    let psample = PotentialSample::from_values(padded, &values)?;
    let sd = eigendecompose(&build_hamiltonian(&padded, &psample)?)?;
    let spectral = propagate_spectral(&sd, t, m, kind, 0.0, Band::Low, Some(cutoff), &sub.xs, &sub.ys)?;

    let req = KernelRequest::new(m, kind, Band::Low, Some(cutoff));
    let stone = stone_kernel(sample, t, &req, &sub)?;
    let spectral_sup = spectral.sup_norm();
    let diff = (&stone.values - &spectral.values).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    Ok(CrossValidation {
        discrepancy: diff / (spectral_sup + 1e-12),
        t,
        m,
        kind,
        lambda0,
        padding: opts.padding,
        points: sub.xs.len() * sub.ys.len(),
        stone_sup: stone.sup_norm(),
        spectral_sup,
        bound_states_removed: sd.bound_state_indices.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freekernel::fresnel_cos_kernel;
    use crate::model::{build_grid, sample_potential, PotentialSpec};

    fn free_sample() -> PotentialSample {
        sample_potential(&PotentialSpec::zero(), &build_grid(10.0, 64).unwrap()).unwrap()
    }

    #[test]
    fn exact_power_law_fit() {
        let curve = DecayCurve {
            points: sweep_times(1.0, 1000.0, 12, 0.0).iter().map(|&t| (t, 3.0 * t.powf(-0.5))).collect(),
            m: 0.0,
            kind: KernelKind::Cos,
            band: Band::Full,
            lambda0: None,
        };
        let fit = fit_exponent(&curve, None).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.stderr <= 1e-12);
        let flat = DecayCurve { points: curve.points.iter().map(|&(t, _)| (t, 2.0)).collect(), ..curve.clone() };
        assert!(fit_exponent(&flat, None).unwrap().slope.abs() < 1e-12);
        let short = DecayCurve { points: curve.points[..5].to_vec(), ..curve.clone() };
        assert!(fit_exponent(&short, None).is_err());
        let mut bad = curve.clone();
        bad.points[3].1 = 0.0;
        assert!(fit_exponent(&bad, None).is_err());
    }

    #[test]
    fn stroboscopic_times() {
        let ts = sweep_times(10.0, 1000.0, 12, 1.0);
        for t in &ts {
            let k = t / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert!(ts.len() >= 10);
    }

    #[test]
    fn free_kernel_matches_fresnel() {
        let s = free_sample();
        let sub = Subgrid::quadratic(8.0, 6);
        let req = KernelRequest::new(0.0, KernelKind::Cos, Band::Full, None);
        let k = stone_kernel(&s, 2.0, &req, &sub).unwrap();
        let peak = (8.0 * PI).sqrt().recip();
        for (a, &x) in sub.xs.iter().enumerate() {
            for (b, &y) in sub.ys.iter().enumerate() {
                let want = fresnel_cos_kernel(2.0, x, y).unwrap();
                assert!((k.values[(a, b)].re - want).abs() < 1e-3 * peak, "{x} {y}");
            }
        }
        assert_eq!(k.max_imag(), 0.0);
    }

    #[test]
    fn cos_is_even_in_time_and_bands_add() {
        let s = sample_potential(&PotentialSpec::scaled_sech2(-0.3), &build_grid(6.0, 64).unwrap()).unwrap();
        let sub = Subgrid::quadratic(3.0, 3);
        let cut = Some(CutoffSpec::new(0.5));
        let engine = StoneEngine::new(&s);
        let full = engine.kernels(&[1.5, -1.5], &KernelRequest::new(1.0, KernelKind::Cos, Band::Full, None), &sub).unwrap();
        assert!((&full[0].values - &full[1].values).camax() < 1e-14);
        let low = engine.kernels(&[1.5], &KernelRequest::new(1.0, KernelKind::Cos, Band::Low, cut), &sub).unwrap();
        let high = engine.kernels(&[1.5], &KernelRequest::new(1.0, KernelKind::Cos, Band::High, cut), &sub).unwrap();
        let sum = &low[0].values + &high[0].values;
        let err = (&sum - &full[0].values).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(err <= 1e-6 * full[0].sup_norm(), "{err}");
    }

    #[test]
    fn resolvent_for_zero_potential_is_free() {
        let s = free_sample();
        let r = resolvent_v(&s, 0.8, Sign::Plus).unwrap();
        let x = s.grid.nodes();
        let want = f_free(Sign::Plus, 0.8 * (x[3] - x[40]).abs()) / (4.0 * 0.8f64.powi(3));
        assert!((r[(3, 40)] - want).norm() < 1e-15);
    }

    #[test]
    fn resolvent_conjugation() {
        let s = sample_potential(&PotentialSpec::scaled_sech2(-0.3), &build_grid(6.0, 64).unwrap()).unwrap();
        let p = resolvent_v(&s, 0.7, Sign::Plus).unwrap();
        let m = resolvent_v(&s, 0.7, Sign::Minus).unwrap();
        assert!((p.map(|z| z.conj()) - m).iter().fold(0.0f64, |a, z| a.max(z.norm())) < 1e-12);
    }

    #[test]
    fn request_validation() {
        let s = free_sample();
        let sub = Subgrid::quadratic(1.0, 2);
        let bad = KernelRequest::new(0.0, KernelKind::Cos, Band::Full, None).with_ell(-1.0);
        assert!(stone_kernel(&s, 1.0, &bad, &sub).is_err());
        let nocut = KernelRequest::new(0.0, KernelKind::Cos, Band::Low, None);
        assert!(stone_kernel(&s, 1.0, &nocut, &sub).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fit_recovers_power_law(p in -2.0f64..1.0, c in 0.01f64..100.0) {
            let curve = DecayCurve {
                points: sweep_times(1.0, 1e3, 10, 0.0).into_iter().map(|t| (t, c * t.powf(p))).collect(),
                m: 0.0,
                kind: KernelKind::Cos,
                band: Band::Full,
                lambda0: None,
            };
            let fit = fit_exponent(&curve, None).unwrap();
            proptest::prop_assert!((fit.slope - p).abs() <= 1e-10);
            proptest::prop_assert!((fit.intercept - c.ln()).abs() <= 1e-9);
        }

        #[test]
        fn stroboscopic_times_are_periods(m in 0.1f64..5.0, count in 2usize..30) {
            let ts = sweep_times(10.0, 1000.0, count, m);
            let period = 2.0 * PI / m;
            for w in ts.windows(2) {
                proptest::prop_assert!(w[1] > w[0]);
            }
            for t in ts {
                let k = t / period;
                proptest::prop_assert!((k - k.round()).abs() <= 1e-9);
            }
        }
    }
}
