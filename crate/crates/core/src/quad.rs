//! Gauss–Legendre quadrature: fixed composite rules and a globally adaptive
//! integrator with panel bisection.

use crate::error::{Error, Result};
use crate::sum::{Compensated, CompensatedComplex};
use num_complex::Complex64;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Compute the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn g20() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    /// Shared 10-point rule.
    pub fn g10() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(10))
    }

    /// Apply the rule on [a, b].
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Compensated::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }

    /// Apply the rule on [a, b] to a complex integrand.
    pub fn apply_complex<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = CompensatedComplex::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(f(mid + half * x) * *w);
        }
        acc.value() * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    if n == 1 {
        (x, 1.0)
    } else {
        (p1, d)
    }
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
    pub panels: usize,
}

/// Composite rule with `panels` equal panels of the 20-point rule.
pub fn composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = GaussLegendre::g20();
    let h = (b - a) / panels as f64;
    let mut acc = Compensated::new();
    for i in 0..panels {
        let lo = a + h * i as f64;
        acc.add(rule.apply(&mut f, lo, lo + h));
    }
    acc.value()
}

/// Complex composite rule with `panels` equal panels of the 20-point rule.
pub fn composite_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
) -> Complex64 {
    let rule = GaussLegendre::g20();
    let h = (b - a) / panels as f64;
    let mut acc = CompensatedComplex::new();
    for i in 0..panels {
        let lo = a + h * i as f64;
        acc.add(rule.apply_complex(&mut f, lo, lo + h));
    }
    acc.value()
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| other.a.partial_cmp(&self.a).unwrap_or(std::cmp::Ordering::Equal))
    }
}

const MAX_PANELS: usize = 200_000;

/// Globally adaptive Gauss–Legendre integration of a complex integrand to
/// absolute tolerance `tol`, starting from `initial` equal panels.
///
/// Each panel is estimated with the 20-point rule and its error with the
/// difference to the 10-point rule; the worst panel is bisected until the
/// summed error estimate drops below `tol`.
pub fn adaptive_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    initial: usize,
) -> Result<Quadrature<Complex64>> {
    if a == b {
        return Ok(Quadrature {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            panels: 0,
        });
    }
    let estimate = |lo: f64, hi: f64, f: &mut F| -> Panel<Complex64> {
        let fine = GaussLegendre::g20().apply_complex(&mut *f, lo, hi);
        let coarse = GaussLegendre::g10().apply_complex(&mut *f, lo, hi);
        Panel {
            a: lo,
            b: hi,
            value: fine,
            error: (fine - coarse).norm(),
        }
    };
    let initial = initial.max(1);
    let h = (b - a) / initial as f64;
    let mut heap = BinaryHeap::new();
    let mut total_err = 0.0;
    for i in 0..initial {
        let lo = a + h * i as f64;
        let hi = if i + 1 == initial { b } else { lo + h };
        let p = estimate(lo, hi, &mut f);
        total_err += p.error;
        heap.push(p);
    }
    while total_err > tol && heap.len() < MAX_PANELS {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = estimate(worst.a, mid, &mut f);
        let right = estimate(mid, worst.b, &mut f);
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Recompute the error sum from scratch to avoid drift in the running total.
    let mut panels: Vec<Panel<Complex64>> = heap.into_vec();
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(std::cmp::Ordering::Equal));
    let mut acc = CompensatedComplex::new();
    let mut err = Compensated::new();
    for p in &panels {
        acc.add(p.value);
        err.add(p.error);
    }
    let result = Quadrature {
        value: acc.value(),
        error: err.value(),
        panels: panels.len(),
    };
    if result.error > tol {
        return Err(Error::Accuracy {
            estimate: result.value.norm(),
            error: result.error,
        });
    }
    Ok(result)
}

/// Real-valued counterpart of [`adaptive_complex`].
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    initial: usize,
) -> Result<Quadrature<f64>> {
    let q = adaptive_complex(|x| Complex64::new(f(x), 0.0), a, b, tol, initial)?;
    Ok(Quadrature {
        value: q.value.re,
        error: q.error,
        panels: q.panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(7);
        // exact for degree <= 13
        let v = rule.apply(|x| x.powi(12) + 3.0 * x.powi(5), -1.0, 1.0);
        assert!((v - 2.0 / 13.0).abs() < 1e-15);
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let q = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 4).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((q.value - exact).abs() < 1e-9, "{} vs {}", q.value, exact);
    }

    #[test]
    fn adaptive_complex_oscillatory() {
        let q = adaptive_complex(|x| Complex64::new(0.0, 40.0 * x).exp(), 0.0, 1.0, 1e-12, 8).unwrap();
        let exact = (Complex64::new(0.0, 40.0).exp() - 1.0) / Complex64::new(0.0, 40.0);
        assert!((q.value - exact).norm() < 1e-11);
    }
}
