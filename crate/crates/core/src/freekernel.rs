//! Closed-form free objects: `F_±`, `R₀^±(λ⁴)`, `G₀`, the Fresnel kernel of `cos(tΔ)`,
//! and checks of the Taylor splittings of `F(λ|x−y|)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::quad::GaussRule;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// `±i`
    pub fn i(self) -> Complex64 {
        I * self.value()
    }
}

/// k-th derivative of `F_±(s) = ±i e^{±is} − e^{−s}`, k ≤ 3 (any k works).
pub fn f_derivative(sign: Sign, s: f64, k: u32) -> Complex64 {
    let si = sign.i();
    let e = Complex64::from_polar(1.0, sign.value() * s);
    si * si.powu(k) * e - (-1.0f64).powi(k as i32) * (-s).exp()
}

/// `F_±(s)`.
pub fn f(sign: Sign, s: f64) -> Complex64 {
    f_derivative(sign, s, 0)
}

/// k-th derivative of `F̃_± = F_± + (1 ± i)s²/2`, for which `F̃'(0) = F̃''(0) = 0`.
pub fn f_tilde_derivative(sign: Sign, s: f64, k: u32) -> Complex64 {
    let c = Complex64::new(1.0, sign.value());
    let poly = match k {
        0 => 0.5 * s * s,
        1 => s,
        2 => 1.0,
        _ => 0.0,
    };
    f_derivative(sign, s, k) + c * poly
}

/// `E(s) = F̃_±(s) − F_±(0) = Σ_{k≥3} c_k s^k`: the regular part of `4λ³R₀`.
///
/// Series for small `s` (the direct form cancels catastrophically there).
pub fn regular_part(sign: Sign, s: f64) -> Complex64 {
    let si = sign.i();
    if s < 0.5 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow_i = si.powu(4); // (±i)^{k+1} at k = 3
        let mut fact = 6.0;
        let mut sk = s * s * s;
        let mut sgn = -1.0; // (−1)^k at k = 3
        for k in 3..30u32 {
            let ck = (pow_i - sgn) / fact;
            acc += ck * sk;
            pow_i *= si;
            fact *= (k + 1) as f64;
            sk *= s;
            sgn = -sgn;
        }
        acc
    } else {
        f_tilde_derivative(sign, s, 0) - (si - 1.0)
    }
}

/// `R₀^±(λ⁴)(x, y) = F_±(λ|x−y|)/(4λ³)`.
pub fn free_resolvent_kernel(lambda: f64, x: f64, y: f64, sign: Sign) -> Result<Complex64> {
    if !(lambda > 0.0) {
        return Err(BeamError::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    Ok(f(sign, lambda * (x - y).abs()) / (4.0 * lambda.powi(3)))
}

/// `G₀(x, y) = |x − y|³/12`, the fundamental solution of `d⁴/dx⁴`.
pub fn g0_kernel(x: f64, y: f64) -> f64 {
    (x - y).abs().powi(3) / 12.0
}

/// `Re[(4πit)^{−1/2} e^{i|x−y|²/(4t)}]`, the kernel of `cos(tΔ)` on ℝ.
pub fn fresnel_cos_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    if t == 0.0 || !t.is_finite() {
        return Err(BeamError::invalid("t", "must be nonzero and finite"));
    }
    // cos(tΔ) is even in t
    let t = t.abs();
    let r2 = (x - y) * (x - y);
    let pref = (4.0 * PI * t).sqrt().recip();
    Ok(pref * (r2 / (4.0 * t) - PI / 4.0).cos())
}

/// `|left − right|` for the order-α Taylor splitting of `F(λ|x−y|)` around `λ|x|`.
///
/// Order 3 uses `F̃`. The θ-integral is Gauss–Legendre from 64 nodes, doubled until the
/// relative change drops below `rel_tol`, split at the kink `θ = x/y` if it lies inside.
pub fn taylor_split_check(
    alpha: u32,
    sign: Sign,
    lambda: f64,
    x: f64,
    y: f64,
    rel_tol: f64,
    max_nodes: usize,
) -> Result<f64> {
    if !(1..=3).contains(&alpha) {
        return Err(BeamError::invalid("alpha", "must be 1, 2 or 3"));
    }
    if !(lambda > 0.0) {
        return Err(BeamError::invalid("lambda", "must be positive"));
    }
    let dfun = |s: f64, k: u32| if alpha == 3 { f_tilde_derivative(sign, s, k) } else { f_derivative(sign, s, k) };
    let sgn = |u: f64| if u < 0.0 { -1.0 } else { 1.0 };
    let lhs = dfun(lambda * (x - y).abs(), 0);

    let integrand = |theta: f64| -> Complex64 {
        let u = x - theta * y;
        let s = lambda * u.abs();
        match alpha {
            1 => sgn(u) * dfun(s, 1),
            2 => (1.0 - theta) * dfun(s, 2),
            _ => (1.0 - theta).powi(2) * sgn(u).powi(3) * dfun(s, 3),
        }
    };
    let mut breaks = vec![0.0];
    if y != 0.0 {
        let k = x / y;
        if k > 0.0 && k < 1.0 {
            breaks.push(k);
        }
    }
    breaks.push(1.0);
    let integrate = |n: usize| -> Complex64 {
        let rule = GaussRule::get(n);
        let mut acc = Complex64::new(0.0, 0.0);
        for w in breaks.windows(2) {
            for (t, wt) in rule.mapped(w[0], w[1]) {
                acc += integrand(t) * wt;
            }
        }
        acc
    };
    let mut n = 64;
    let mut prev = integrate(n);
    let integral = loop {
        if 2 * n > max_nodes {
            return Err(BeamError::numerical(
                "quadrature_nonconvergence",
                format!("theta integral not converged at {n} nodes"),
            ));
        }
        n *= 2;
        let next = integrate(n);
        let change = (next - prev).norm();
        prev = next;
        if change <= rel_tol * next.norm().max(1e-300) || change == 0.0 {
            break next;
        }
    };

    let ax = x.abs();
    let l = lambda;
    let rhs = match alpha {
        1 => dfun(l * ax, 0) - l * y * integral,
        2 => dfun(l * ax, 0) - l * y * sgn(x) * dfun(l * ax, 1) + l * l * y * y * integral,
        _ => {
            dfun(l * ax, 0) - l * y * sgn(x) * dfun(l * ax, 1) + 0.5 * l * l * y * y * dfun(l * ax, 2)
                - 0.5 * (l * y).powi(3) * integral
        }
    };
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn f_special_values() {
        assert!(close(f(Sign::Plus, 0.0), Complex64::new(-1.0, 1.0), 1e-15));
        assert!(close(f(Sign::Plus, PI), Complex64::new(-(-PI).exp(), -1.0), 1e-15));
        for &s in &[0.0, 0.3, 2.0, 17.5] {
            assert!(close(f(Sign::Minus, s), f(Sign::Plus, s).conj(), 1e-15));
        }
    }

    #[test]
    fn f_derivatives_at_zero() {
        assert!(f_derivative(Sign::Plus, 0.0, 1).norm() < 1e-15);
        assert!(close(f_derivative(Sign::Plus, 0.0, 2), Complex64::new(-1.0, -1.0), 1e-15));
        assert!(close(f_derivative(Sign::Minus, 0.0, 2), Complex64::new(-1.0, 1.0), 1e-15));
        for sign in [Sign::Plus, Sign::Minus] {
            assert!(f_tilde_derivative(sign, 0.0, 1).norm() < 1e-15);
            assert!(f_tilde_derivative(sign, 0.0, 2).norm() < 1e-15);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = 1e-5;
        for k in 0..3 {
            for &s in &[0.2, 1.0, 3.3] {
                let fd = (f_derivative(Sign::Plus, s + h, k) - f_derivative(Sign::Plus, s - h, k)) / (2.0 * h);
                assert!(close(fd, f_derivative(Sign::Plus, s, k + 1), 1e-8));
            }
        }
    }

    #[test]
    fn regular_part_is_continuous_across_switch() {
        for sign in [Sign::Plus, Sign::Minus] {
            let a = regular_part(sign, 0.5 - 1e-15);
            let b = regular_part(sign, 0.5);
            assert!((a - b).norm() < 1e-13);
            // leading coefficient 1/3
            let s = 1e-3;
            assert!((regular_part(sign, s) / s.powi(3) - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-2);
        }
    }

    #[test]
    fn kernel_values() {
        let k = free_resolvent_kernel(1.0, 0.3, 0.3, Sign::Plus).unwrap();
        assert!(close(k, Complex64::new(-0.25, 0.25), 1e-15));
        let k = free_resolvent_kernel(2.0, 1.0, 1.0, Sign::Plus).unwrap();
        assert!(close(k, Complex64::new(-1.0, 1.0) / 32.0, 1e-15));
        assert!(free_resolvent_kernel(0.0, 0.0, 1.0, Sign::Plus).is_err());
    }

    #[test]
    fn g0_is_low_energy_cubic_term() {
        assert_eq!(g0_kernel(0.4, 0.4), 0.0);
        assert!((g0_kernel(0.0, 1.0) - 1.0 / 12.0).abs() < 1e-16);
        // λ → 0: R₀ − a/λ³ − b r²/λ → r³/12
        let r = 1.0;
        let lam = 1e-3;
        let reg = regular_part(Sign::Plus, lam * r) / (4.0 * lam.powi(3));
        assert!((reg.re - 1.0 / 12.0).abs() < 1e-3);
    }

    #[test]
    fn fresnel_peak_and_parity() {
        let mut sup: f64 = 0.0;
        for i in 0..20_000 {
            let r = i as f64 * 1e-3;
            sup = sup.max(fresnel_cos_kernel(1.0, r, 0.0).unwrap().abs());
        }
        assert!((sup - (4.0 * PI).sqrt().recip()).abs() < 1e-6);
        assert_eq!(fresnel_cos_kernel(2.0, 1.0, 3.0).unwrap(), fresnel_cos_kernel(-2.0, 3.0, 1.0).unwrap());
        assert!(fresnel_cos_kernel(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn taylor_splittings() {
        let r = taylor_split_check(1, Sign::Plus, 1.0, 2.0, 0.0, 1e-12, 1 << 14).unwrap();
        assert!(r < 1e-15);
        let r = taylor_split_check(1, Sign::Plus, 1.0, 2.0, 1.0, 1e-12, 1 << 14).unwrap();
        assert!(r <= 1e-10, "{r}");
        let r = taylor_split_check(2, Sign::Minus, 0.7, 0.4, 1.3, 1e-12, 1 << 14).unwrap();
        assert!(r <= 1e-10, "{r}");
        let r = taylor_split_check(3, Sign::Plus, 0.5, 1.0, 0.3, 1e-12, 1 << 14).unwrap();
        assert!(r <= 1e-10, "{r}");
        assert!(taylor_split_check(4, Sign::Plus, 0.5, 1.0, 0.3, 1e-12, 1 << 14).is_err());
    }

    proptest::proptest! {
        #[test]
        fn minus_is_conjugate_of_plus(s in 0.0f64..50.0, k in 0u32..4) {
            let p = f_derivative(Sign::Plus, s, k);
            let m = f_derivative(Sign::Minus, s, k);
            proptest::prop_assert!((p.conj() - m).norm() <= 1e-14 * (1.0 + p.norm()));
        }

        #[test]
        fn free_resolvent_is_symmetric(l in 0.05f64..5.0, x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let a = free_resolvent_kernel(l, x, y, Sign::Plus).unwrap();
            let b = free_resolvent_kernel(l, y, x, Sign::Plus).unwrap();
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn taylor_splittings_hold(alpha in 1u32..4, l in 0.1f64..3.0, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let e = taylor_split_check(alpha, Sign::Plus, l, x, y, 1e-12, 1 << 16).unwrap();
            proptest::prop_assert!(e <= 1e-9, "alpha {} err {}", alpha, e);
        }
    }
}
