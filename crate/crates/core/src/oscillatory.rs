//! Littlewood–Paley pieces, the dyadic oscillatory integrals `K_N^±`, the two-branch
//! bound `Θ_{N₀,N}(m, t)` and the dyadic-sum checks.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::freekernel::Sign;
use crate::model::smoothstep;
use crate::quad::{GaussRule, PANEL_ORDER};

/// `χ(s)`: 1 for `s ≤ 1/2`, 0 for `s ≥ 1`.
pub fn chi_half(s: f64) -> f64 {
    1.0 - smoothstep(2.0 * s - 1.0)
}

/// `φ₀(s) = χ(s) − χ(2s)`, supported in `[1/4, 1]`.
pub fn phi0(s: f64) -> f64 {
    chi_half(s) - chi_half(2.0 * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DyadicPiece {
    pub index: i32,
}

impl DyadicPiece {
    pub fn lo(&self) -> f64 {
        2f64.powi(self.index - 2)
    }

    pub fn hi(&self) -> f64 {
        2f64.powi(self.index)
    }

    /// `φ₀(2^{−N} s)`.
    pub fn weight(&self, s: f64) -> f64 {
        phi0(s * 2f64.powi(-self.index))
    }
}

/// Every `N` whose support `[2^{N−2}, 2^N]` meets `[s_min, s_max]`.
pub fn dyadic_partition(s_min: f64, s_max: f64) -> Result<Vec<DyadicPiece>> {
    if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) {
        return Err(BeamError::invalid("s_range", "need 0 < s_min < s_max < inf"));
    }
    let first = s_min.log2().ceil() as i32;
    let last = s_max.log2().floor() as i32 + 2;
    Ok((first..=last).map(|index| DyadicPiece { index }).filter(|p| p.hi() >= s_min && p.lo() <= s_max).collect())
}

pub type Amplitude = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Integrand of `K_N^±`. The amplitude takes `λ = 2^N s`.
#[derive(Clone)]
pub struct OscIntegrand {
    pub t: f64,
    pub m: f64,
    pub ell: f64,
    /// Power `s^h`.
    pub h: f64,
    /// Spatial phase offset `Ψ(z) ≥ 0`.
    pub psi: f64,
    /// `Φ(λ)`; `None` means `Φ ≡ 1`.
    pub amplitude: Option<Amplitude>,
    pub amplitude_bound: f64,
}

impl std::fmt::Debug for OscIntegrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OscIntegrand")
            .field("t", &self.t)
            .field("m", &self.m)
            .field("ell", &self.ell)
            .field("h", &self.h)
            .field("psi", &self.psi)
            .field("amplitude_bound", &self.amplitude_bound)
            .finish()
    }
}

impl OscIntegrand {
    /// `Φ ≡ 1`, `h = 0`.
    pub fn unit(t: f64, m: f64, psi: f64) -> OscIntegrand {
        OscIntegrand { t, m, ell: 0.0, h: 0.0, psi, amplitude: None, amplitude_bound: 1.0 }
    }

    pub fn with_amplitude(mut self, amplitude: Amplitude, bound: f64) -> OscIntegrand {
        self.amplitude = Some(amplitude);
        self.amplitude_bound = bound;
        self
    }

    /// Spot-checks `|Φ|` and `|∂_s Φ(2^N s)|` against the bound on 65 samples of `[1/4, 1]`.
    pub fn validate(&self, n: i32) -> Result<()> {
        if !self.t.is_finite() || !self.m.is_finite() {
            return Err(BeamError::invalid("integrand", "t and m must be finite"));
        }
        if !(self.psi >= 0.0) {
            return Err(BeamError::invalid("psi", "must be nonnegative"));
        }
        if self.amplitude_bound < 0.0 {
            return Err(BeamError::invalid("amplitude_bound", "must be nonnegative"));
        }
        let Some(amp) = &self.amplitude else {
            return if self.amplitude_bound >= 1.0 {
                Ok(())
            } else {
                Err(BeamError::invalid("amplitude", "unit amplitude exceeds the bound"))
            };
        };
        let scale = 2f64.powi(n);
        let ds = 1e-6;
        let slack = 1.0 + 1e-6;
        for k in 0..=64 {
            let s = 0.25 + 0.75 * k as f64 / 64.0;
            let a = amp(scale * s);
            if !(a.norm() <= self.amplitude_bound * slack) {
                return Err(BeamError::invalid("amplitude", format!("|Phi| = {} exceeds bound at s = {s}", a.norm())));
            }
            let (s0, s1) = ((s - ds).max(0.25), (s + ds).min(1.0));
            let d = (amp(scale * s1) - amp(scale * s0)) / (s1 - s0);
            if !(d.norm() <= self.amplitude_bound * slack) {
                return Err(BeamError::invalid("amplitude", format!("|d_s Phi| = {} exceeds bound at s = {s}", d.norm())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KnValue {
    pub value: Complex64,
    pub nodes: usize,
    /// `∫|integrand|` at the final resolution.
    pub abs_integral: f64,
}

/// `K_N^± = ∫ e^{−it√(2^{4N}s⁴+m²)} e^{±i2^N sΨ} s^h φ₀(s) Φ(2^N s) ds` over `[1/4, 1]`.
///
/// Composite Gauss–Legendre from `max(32, 4⌈(|t|2^{2N} + 2^NΨ)/π⌉)` nodes, doubled until
/// the change is below `rel_tol·|K_N|` plus a round-off floor proportional to `∫|·|`
/// (phases of size `|t|2^{2N}` are only known to `ε|t|2^{2N}`).
pub fn k_n(sign: Sign, n: i32, ig: &OscIntegrand, rel_tol: f64, max_nodes: usize) -> Result<KnValue> {
    ig.validate(n)?;
    let scale = 2f64.powi(n);
    let s4 = scale.powi(4);
    let m2 = ig.m * ig.m;
    let lin = sign.value() * scale * ig.psi;
    let omega = |s: f64| (s4 * s.powi(4) + m2).sqrt();
    // One large phase per panel centre; inside the panel only the small offset
    // −t(ω(s) − ω(c)) + lin·(s − c) is formed, in cancellation-free form.
    let panel = |lo: f64, hi: f64, rule: &GaussRule| -> (Complex64, f64) {
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        let wc = omega(c);
        let big = -ig.t * wc + lin * c;
        let ec = Complex64::from_polar(1.0, big - TAU * (big / TAU).round());
        let mut acc = Complex64::new(0.0, 0.0);
        let mut abs = 0.0;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let s = c + r * x;
            let bump = phi0(s);
            if bump == 0.0 {
                continue;
            }
            let d = s - c;
            let dw = s4 * d * (s + c) * (s * s + c * c) / (omega(s) + wc);
            let pw = if ig.h == 0.0 { 1.0 } else { s.powf(ig.h) };
            let wt = bump * pw * w * r;
            let (sn, cs) = (-ig.t * dw + lin * d).sin_cos();
            match &ig.amplitude {
                None => {
                    acc += Complex64::new(cs * wt, sn * wt);
                    abs += wt.abs();
                }
                Some(a) => {
                    let phi = a(scale * s);
                    acc += Complex64::new(cs, sn) * phi * wt;
                    abs += wt.abs() * phi.norm_sqr().sqrt();
                }
            }
        }
        (ec * acc, abs)
    };
    let segment = |a: f64, b: f64, total: usize| -> (Complex64, f64) {
        if total <= 4 * PANEL_ORDER {
            return panel(a, b, &GaussRule::get(total.max(1)));
        }
        let rule = GaussRule::get(PANEL_ORDER);
        let panels = total.div_ceil(PANEL_ORDER);
        let width = (b - a) / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut abs = 0.0;
        for p in 0..panels {
            let lo = a + width * p as f64;
            let (v, m) = panel(lo, lo + width, &rule);
            acc += v;
            abs += m;
        }
        (acc, abs)
    };
    let range = ig.t.abs() * scale * scale + scale * ig.psi;
    let mut nodes = ((range / PI).ceil() as usize * 4).max(32);
    if nodes > max_nodes {
        return Err(BeamError::numerical(
            "quadrature_nonconvergence",
            format!("K_N needs {nodes} nodes for phase range {range:.3e} (max_nodes {max_nodes})"),
        ));
    }
    // φ₀ changes formula at s = 1/2
    let eval = |n: usize| {
        let (a, aa) = segment(0.25, 0.5, n.div_ceil(3));
        let (b, ba) = segment(0.5, 1.0, n - n.div_ceil(3));
        (a + b, aa + ba)
    };
    let (mut prev, _) = eval(nodes);
    loop {
        if 2 * nodes > max_nodes {
            return Err(BeamError::numerical(
                "quadrature_nonconvergence",
                format!("K_N not converged at {nodes} nodes (phase range {range:.3e})"),
            ));
        }
        nodes *= 2;
        let (next, abs) = eval(nodes);
        // round-off floor: each phase carries ~ε·range absolute error, averaging down like 1/√n
        let floor = (1e-13 + 8.0 * f64::EPSILON * range / (nodes as f64).sqrt()) * abs;
        if (next - prev).norm() <= rel_tol * next.norm() + floor {
            return Ok(KnValue { value: next, nodes, abs_integral: abs });
        }
        prev = next;
    }
}

/// `C_m = 2 + ½ log₂(1 + 2^{−4(N″−2)} m²)`.
pub fn c_m(m: f64, n_double_prime: i32) -> f64 {
    2.0 + 0.5 * (1.0 + 2f64.powi(-4 * (n_double_prime - 2)) * m * m).log2()
}

/// `N₀ = ⌊log₂(Ψ/|t|)⌋`; `None` when `Ψ = 0` (no stationary scale).
pub fn stationary_index(psi: f64, t: f64) -> Option<i32> {
    (psi > 0.0 && t != 0.0).then(|| (psi / t.abs()).log2().floor() as i32)
}

/// Which case of `Θ` applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaBranch {
    Near,
    Far,
}

pub fn theta_branch(n: i32, n0: Option<i32>, m: f64, n_double_prime: i32) -> ThetaBranch {
    match n0 {
        Some(n0) if ((n - n0).abs() as f64) <= c_m(m, n_double_prime) => ThetaBranch::Near,
        _ => ThetaBranch::Far,
    }
}

/// `Θ_{N₀,N}(m, t)`; `n0 = None` always takes the far branch.
pub fn theta(n: i32, n0: Option<i32>, m: f64, t: f64, n_double_prime: i32) -> Result<f64> {
    if t == 0.0 || !t.is_finite() {
        return Err(BeamError::invalid("t", "must be nonzero and finite"));
    }
    let jm = 1.0 + m.abs();
    let q = 1.0 + t.abs() * 2f64.powi(2 * n);
    Ok(match theta_branch(n, n0, m, n_double_prime) {
        ThetaBranch::Near => jm.sqrt() / q.sqrt(),
        ThetaBranch::Far => jm / q,
    })
}

/// The three weighted series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SumVariant {
    /// `Σ 2^{(1+2ℓ)N} Θ(0, t)` against `|t|^{−(1+2ℓ)/2}`.
    Weighted,
    /// `Σ 2^N Θ(m, t)` against `⟨m⟩|t|^{−1/2}`.
    Mass,
    /// `Σ 2^N (1 + |t|2^{4N})^{−1/2}` against `|t|^{−1/4}`.
    Quartic,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DyadicSum {
    pub sum: f64,
    pub bound: f64,
    pub ratio: f64,
    pub terms: usize,
}

/// Sums the series over all `N`, stopping in each direction once terms fall below
/// `1e−16` of the partial sum.
pub fn dyadic_sum_check(variant: SumVariant, m: f64, t: f64, ell: f64, n0: Option<i32>, n_double_prime: i32) -> Result<DyadicSum> {
    if t == 0.0 || !t.is_finite() {
        return Err(BeamError::invalid("t", "must be nonzero and finite"));
    }
    if variant == SumVariant::Weighted && !(ell > -0.5 && ell <= 0.0) {
        return Err(BeamError::invalid("ell", "variant (i) needs -1/2 < ell <= 0"));
    }
    let term = |n: i32| -> Result<f64> {
        let p = 2f64.powi(n);
        Ok(match variant {
            SumVariant::Weighted => p.powf(1.0 + 2.0 * ell) * theta(n, n0, 0.0, t, n_double_prime)?,
            SumVariant::Mass => p * theta(n, n0, m, t, n_double_prime)?,
            SumVariant::Quartic => p / (1.0 + t.abs() * p.powi(4)).sqrt(),
        })
    };
    // start at the scale where |t|2^{2N} ~ 1
    let centre = (-0.5 * t.abs().log2()).round() as i32;
    let mut sum = term(centre)?;
    let mut terms = 1;
    for dir in [1i32, -1] {
        let mut n = centre + dir;
        let mut quiet = 0;
        loop {
            let v = term(n)?;
            sum += v;
            terms += 1;
            // require several consecutive negligible terms so a Near window is not skipped
            quiet = if v < 1e-16 * sum { quiet + 1 } else { 0 };
            if quiet >= 8 || terms > 100_000 {
                break;
            }
            n += dir;
        }
    }
    let bound = match variant {
        SumVariant::Weighted => t.abs().powf(-(1.0 + 2.0 * ell) / 2.0),
        SumVariant::Mass => (1.0 + m.abs()) * t.abs().powf(-0.5),
        SumVariant::Quartic => t.abs().powf(-0.25),
    };
    Ok(DyadicSum { sum, bound, ratio: sum / bound, terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let pieces = dyadic_partition(1e-3, 1e3).unwrap();
        assert!((21..=23).contains(&pieces.len()), "{}", pieces.len());
        for &s in &[3.7, 0.01, 1.0, 0.25, 123.4] {
            let total: f64 = pieces.iter().map(|p| p.weight(s)).sum();
            assert!((total - 1.0).abs() <= 1e-14, "{s}: {total}");
        }
        assert_eq!(phi0(0.2), 0.0);
        assert_eq!(phi0(1.0), 0.0);
        assert!(dyadic_partition(1.0, 0.5).is_err());
    }

    #[test]
    fn zero_amplitude_and_bump_integral() {
        let mut ig = OscIntegrand::unit(0.0, 0.0, 0.0);
        let one = k_n(Sign::Plus, 0, &ig, 1e-12, 1 << 20).unwrap();
        let g = GaussRule::get(16);
        let reference: f64 = g.integrate(0.25, 0.5, phi0) + g.integrate(0.5, 1.0, phi0);
        assert!((one.value.re - reference).abs() < 1e-12);
        assert!(one.value.im.abs() < 1e-15);
        // χ(s) − χ(2s) telescopes: ∫φ₀ = ½∫₀¹χ
        let chi_mass: f64 = g.integrate(0.5, 1.0, chi_half) + 0.5;
        assert!((reference - 0.5 * chi_mass).abs() < 1e-12);
        ig = ig.with_amplitude(Arc::new(|_| Complex64::new(0.0, 0.0)), 1.0);
        assert_eq!(k_n(Sign::Plus, 3, &ig, 1e-10, 1 << 20).unwrap().value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn conjugation_symmetry() {
        let ig = OscIntegrand::unit(37.0, 1.0, 20.0);
        let neg = OscIntegrand { t: -37.0, ..ig.clone() };
        let a = k_n(Sign::Plus, 2, &ig, 1e-11, 1 << 22).unwrap().value;
        let b = k_n(Sign::Minus, 2, &neg, 1e-11, 1 << 22).unwrap().value;
        assert!((a.conj() - b).norm() < 1e-10);
    }

    #[test]
    fn van_der_corput_scaling() {
        // stationary point s = Ψ/(2t2^N) kept at 1/2
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &q in &[1e2, 1e3, 1e4, 1e5, 1e6] {
            let n = 2;
            let t = q / 16.0;
            let psi = t * 4.0;
            let k = k_n(Sign::Plus, n, &OscIntegrand::unit(t, 0.0, psi), 1e-9, 1 << 26).unwrap();
            let r = k.value.norm() * q.sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        assert!(lo > 0.3 && hi / lo < 1.5, "{lo} {hi}");
    }

    #[test]
    fn theta_values() {
        assert!((theta(0, Some(0), 0.0, 1.0, 0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(c_m(0.0, 5), 2.0);
        let t = 3.0;
        assert!((theta(0, Some(10), 0.0, t, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!(theta(0, None, 0.0, 0.0, 0).is_err());
        assert_eq!(theta_branch(3, Some(1), 0.0, 0), ThetaBranch::Near);
        assert_eq!(theta_branch(3, Some(0), 0.0, 0), ThetaBranch::Far);
    }

    #[test]
    fn quartic_sum_scales() {
        let ratios: Vec<f64> = [1.0, 16.0, 256.0, 4096.0]
            .iter()
            .map(|&t| dyadic_sum_check(SumVariant::Quartic, 0.0, t, 0.0, None, 0).unwrap().ratio)
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 1.2, "{ratios:?}");
    }

    #[test]
    fn weighted_sum_rejects_bad_ell() {
        assert!(dyadic_sum_check(SumVariant::Weighted, 0.0, 1.0, -0.5, None, 0).is_err());
        assert!(dyadic_sum_check(SumVariant::Mass, 1.0, 0.0, 0.0, None, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn partition_sums_to_one(e in -2.5f64..2.5) {
            let s = 10f64.powf(e);
            let pieces = dyadic_partition(1e-3, 1e3).unwrap();
            let total: f64 = pieces.iter().map(|p| p.weight(s)).sum();
            proptest::prop_assert!((total - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn stationary_index_brackets_ratio(psi in 1e-3f64..1e6, t in 1e-2f64..1e5) {
            let n0 = stationary_index(psi, t).unwrap();
            let r = psi / t;
            proptest::prop_assert!(2f64.powi(n0) <= r * (1.0 + 1e-12) && r < 2f64.powi(n0 + 1) * (1.0 + 1e-12));
        }

        #[test]
        fn theta_decreases_in_time(n in -10i32..10, m in 0.0f64..4.0, t in 0.1f64..1e4, k in 1.0f64..10.0) {
            let a = theta(n, Some(0), m, t, 0).unwrap();
            let b = theta(n, Some(0), m, k * t, 0).unwrap();
            proptest::prop_assert!(b <= a);
            proptest::prop_assert!(theta(n, Some(0), m, -t, 0).unwrap() == a);
        }
    }
}
