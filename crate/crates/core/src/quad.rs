//! Gauss–Legendre rules, plain and composite.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Newton iteration on the three-term recurrence. O(n²), fine up to a few thousand nodes.
    pub fn compute(n: usize) -> GaussRule {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Shared, memoised rule.
    pub fn get(n: usize) -> Arc<GaussRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(r) = cache.lock().unwrap().get(&n) {
            return r.clone();
        }
        let rule = Arc::new(GaussRule::compute(n));
        cache.lock().unwrap().insert(n, rule.clone());
        rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes/weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + r * x, r * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Order of each panel in composite rules.
pub const PANEL_ORDER: usize = 16;

/// Composite Gauss–Legendre nodes on [a, b]: `total` is rounded up to a multiple of
/// [`PANEL_ORDER`]; small totals use a single rule of that size.
pub fn composite(a: f64, b: f64, total: usize) -> Vec<(f64, f64)> {
    let total = total.max(1);
    if total <= 4 * PANEL_ORDER {
        return GaussRule::get(total).mapped(a, b).collect();
    }
    let panels = total.div_ceil(PANEL_ORDER);
    let rule = GaussRule::get(PANEL_ORDER);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * PANEL_ORDER);
    for p in 0..panels {
        let lo = a + width * p as f64;
        out.extend(rule.mapped(lo, lo + width));
    }
    out
}

/// Streaming composite sum of a complex integrand; no node storage.
pub fn composite_sum(a: f64, b: f64, total: usize, f: impl Fn(f64) -> Complex64) -> (Complex64, f64) {
    let total = total.max(1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    if total <= 4 * PANEL_ORDER {
        for (x, w) in GaussRule::get(total).mapped(a, b) {
            let v = f(x);
            acc += v * w;
            abs += v.norm() * w;
        }
        return (acc, abs);
    }
    let panels = total.div_ceil(PANEL_ORDER);
    let rule = GaussRule::get(PANEL_ORDER);
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let mut part = Complex64::new(0.0, 0.0);
        for (x, w) in rule.mapped(lo, lo + width) {
            let v = f(x);
            part += v * w;
            abs += v.norm() * w;
        }
        acc += part;
    }
    (acc, abs)
}
