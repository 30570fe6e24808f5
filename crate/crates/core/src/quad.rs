//! Gauss-Legendre quadrature and nested rules on triangular domains.

use std::f64::consts::PI;
use std::ops::{AddAssign, Mul};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on `P_n` from Chebyshev-based initial guesses; accurate to
/// machine precision for the desk-scale orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Recurrence for P_n(x) and P_{n-1}(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// A Gauss-Legendre rule mapped on demand to arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<T>(&self, a: f64, b: f64, f: impl Fn(f64) -> T) -> T
    where
        T: Default + Copy + AddAssign + Mul<f64, Output = T>,
    {
        let mut acc = T::default();
        for (x, w) in self.mapped(a, b) {
            acc += f(x) * w;
        }
        acc
    }
}

/// Split `[a, b]` at `pivot` when the pivot lies strictly inside.
pub(crate) fn panels(a: f64, b: f64, pivot: f64) -> Vec<(f64, f64)> {
    if pivot > a && pivot < b {
        vec![(a, pivot), (pivot, b)]
    } else {
        vec![(a, b)]
    }
}

/// Nested rule for `int_{si}^{sf} ds2 int_{si}^{s2} ds1 f(s1, s2)` with both
/// loops split at `pivot`, where the integrand may lose smoothness.
pub fn triangle<T>(
    si: f64,
    sf: f64,
    pivot: f64,
    rule: &GaussRule,
    mut f: impl FnMut(f64, f64) -> T,
) -> T
where
    T: Default + Copy + AddAssign + Mul<f64, Output = T>,
{
    let mut acc = T::default();
    for (lo2, hi2) in panels(si, sf, pivot) {
        for (s2, w2) in rule.mapped(lo2, hi2) {
            for (lo1, hi1) in panels(si, s2, pivot) {
                for (s1, w1) in rule.mapped(lo1, hi1) {
                    acc += f(s1, s2) * (w1 * w2);
                }
            }
        }
    }
    acc
}

/// Deterministic integral of `f` over the ordered simplex
/// `si < s_1 < ... < s_m < sf` by nested Gauss rules, every level split at
/// `pivot` where the integrand may lose smoothness. Cost grows like
/// `(2 levels * points)^m`, so this is meant for small `m` with modest rules.
pub fn simplex_gauss<T>(
    m: usize,
    si: f64,
    sf: f64,
    pivot: f64,
    rule: &GaussRule,
    f: &impl Fn(&[f64]) -> T,
) -> T
where
    T: Default + Copy + AddAssign + Mul<f64, Output = T>,
{
    fn rec<T>(
        remaining: usize,
        lower: f64,
        upper: f64,
        pivot: f64,
        rule: &GaussRule,
        stack: &mut Vec<f64>,
        f: &impl Fn(&[f64]) -> T,
    ) -> T
    where
        T: Default + Copy + AddAssign + Mul<f64, Output = T>,
    {
        if remaining == 0 {
            let mut times = stack.clone();
            times.reverse();
            return f(&times);
        }
        let mut acc = T::default();
        for (lo, hi) in panels(lower, upper, pivot) {
            for (x, w) in rule.mapped(lo, hi) {
                stack.push(x);
                acc += rec(remaining - 1, lower, x, pivot, rule, stack, f) * w;
                stack.pop();
            }
        }
        acc
    }
    let mut stack = Vec::with_capacity(m);
    rec(m, si, sf, pivot, rule, &mut stack, f)
}

/// [`triangle`] with a Richardson-style error estimate from doubling the
/// number of quadrature points.
pub fn triangle_with_error(
    si: f64,
    sf: f64,
    pivot: f64,
    points: usize,
    mut f: impl FnMut(f64, f64) -> f64,
) -> (f64, f64) {
    let coarse = triangle(si, sf, pivot, &GaussRule::new(points), &mut f);
    let fine = triangle(si, sf, pivot, &GaussRule::new(2 * points), &mut f);
    (fine, (fine - coarse).abs())
}
