use serde::Serialize;

/// Order-3 smoothstep `S(u) = 35u⁴ − 84u⁵ + 70u⁶ − 20u⁷`, clamped to [0, 1]. C³.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let u4 = u * u * u * u;
        u4 * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)))
    }
}

/// Low/high energy split at `λ₀`: χ₁ = 1 below λ₀, 0 above 2λ₀, χ₂ = 1 − χ₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSpec {
    pub lambda0: f64,
}

impl CutoffSpec {
    pub fn new(lambda0: f64) -> Self {
        assert!(lambda0 > 0.0, "lambda0 must be positive");
        CutoffSpec { lambda0 }
    }

    pub fn chi1(&self, mu: f64) -> f64 {
        1.0 - smoothstep((mu.abs() - self.lambda0) / self.lambda0)
    }

    pub fn chi2(&self, mu: f64) -> f64 {
        smoothstep((mu.abs() - self.lambda0) / self.lambda0)
    }

    /// χ₁(λ⁴).
    pub fn chi1_tilde(&self, lambda: f64) -> f64 {
        self.chi1(lambda.powi(4))
    }

    pub fn chi2_tilde(&self, lambda: f64) -> f64 {
        self.chi2(lambda.powi(4))
    }

    /// Largest λ with χ̃₁(λ) ≠ 0.
    pub fn lambda_max(&self) -> f64 {
        (2.0 * self.lambda0).powf(0.25)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints_and_flatness() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let d = 1e-4;
        assert!(smoothstep(d) < 1e-14);
        assert!(1.0 - smoothstep(1.0 - d) < 1e-14);
    }

    #[test]
    fn chi_pair_adds_to_one() {
        let c = CutoffSpec::new(0.3);
        for i in 0..10_000 {
            let mu = i as f64 * 1e-4;
            assert!((c.chi1(mu) + c.chi2(mu) - 1.0).abs() <= 1e-15);
            assert!((0.0..=1.0).contains(&c.chi1(mu)));
        }
        assert_eq!(c.chi1(0.29), 1.0);
        assert_eq!(c.chi1(0.61), 0.0);
    }

    #[test]
    fn first_two_derivatives_bounded() {
        let c = CutoffSpec::new(1.0);
        let h = 1e-4;
        let mut d2max: f64 = 0.0;
        for i in 1..10_000 {
            let mu = 0.9 + i as f64 * 1.2e-4;
            let d2 = (c.chi1(mu + h) - 2.0 * c.chi1(mu) + c.chi1(mu - h)) / (h * h);
            d2max = d2max.max(d2.abs());
        }
        assert!(d2max < 10.0, "{d2max}");
    }

    proptest::proptest! {
        #[test]
        fn bands_sum_to_one(l0 in 1e-6f64..10.0, mu in -100.0f64..100.0) {
            let c = CutoffSpec::new(l0);
            let s = c.chi1(mu) + c.chi2(mu);
            proptest::prop_assert!((s - 1.0).abs() <= 1e-15);
            proptest::prop_assert!((0.0..=1.0).contains(&c.chi1(mu)));
        }

        #[test]
        fn low_band_is_nonincreasing(l0 in 1e-4f64..10.0, a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let c = CutoffSpec::new(l0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(c.chi1(lo) >= c.chi1(hi));
        }
    }
}
