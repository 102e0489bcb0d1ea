//! Test functions: the even pair (Φ, Φ̂) with compactly supported Fourier
//! transform, the level weight Ψ, the dyadic partition of unity V, and a
//! numerical Mellin transform.

use crate::error::{Error, Result};
use crate::quad::{adaptive, adaptive_complex, GaussLegendre};
use crate::sum::Compensated;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Absolute tolerance of every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-10;

/// Which concrete pair (Φ, Φ̂) is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    Fejer,
    SmoothBump,
}

impl PhiKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhiKind::Fejer => "fejer",
            PhiKind::SmoothBump => "bump",
        }
    }
}

/// Panels of the fixed rule used for the inverse transform of the bump at
/// small |x|; more are added in proportion to σ|x| to follow the oscillation.
const BUMP_BASE_PANELS: usize = 32;

/// An even test function Φ whose Fourier transform Φ̂ is supported in (−σ, σ).
///
/// Normalisation: Φ̂(t) = ∫Φ(x)e(−xt)dx with e(x) = exp(2πix).
#[derive(Debug, Clone)]
pub struct TestFunctionPair {
    pub sigma: f64,
    pub kind: PhiKind,
    /// Precomputed (t, w·Φ̂(t)) on [0, σ] for the base panel count.
    cached: Arc<Vec<(f64, f64)>>,
}

/// Φ̂(t) = max(0, 1 − |t|/σ), Φ(x) = σ·(sin(πσx)/(πσx))².
pub fn make_fejer(sigma: f64) -> Result<TestFunctionPair> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("support radius must be positive, got {sigma}")));
    }
    Ok(TestFunctionPair {
        sigma,
        kind: PhiKind::Fejer,
        cached: Arc::new(Vec::new()),
    })
}

/// Φ̂(t) = exp(1 − 1/(1 − (t/σ)²)) on |t| < σ (so Φ̂(0) = 1); Φ by quadrature.
pub fn make_smooth_bump(sigma: f64) -> Result<TestFunctionPair> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("support radius must be positive, got {sigma}")));
    }
    let cached = bump_nodes(sigma, BUMP_BASE_PANELS);
    Ok(TestFunctionPair {
        sigma,
        kind: PhiKind::SmoothBump,
        cached: Arc::new(cached),
    })
}

/// Build a pair by kind.
pub fn make_pair(kind: PhiKind, sigma: f64) -> Result<TestFunctionPair> {
    match kind {
        PhiKind::Fejer => make_fejer(sigma),
        PhiKind::SmoothBump => make_smooth_bump(sigma),
    }
}

fn bump_hat(sigma: f64, t: f64) -> f64 {
    let u = t / sigma;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

fn bump_nodes(sigma: f64, panels: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::g20();
    let h = sigma / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.nodes.len());
    for i in 0..panels {
        let mid = h * (i as f64 + 0.5);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = mid + 0.5 * h * x;
            out.push((t, 0.5 * h * w * bump_hat(sigma, t)));
        }
    }
    out
}

impl TestFunctionPair {
    /// Φ̂(t).
    pub fn phi_hat(&self, t: f64) -> f64 {
        match self.kind {
            PhiKind::Fejer => (1.0 - t.abs() / self.sigma).max(0.0),
            PhiKind::SmoothBump => bump_hat(self.sigma, t),
        }
    }

    /// Φ(x).
    pub fn phi(&self, x: f64) -> f64 {
        match self.kind {
            PhiKind::Fejer => {
                let y = PI * self.sigma * x;
                if y.abs() < 1e-8 {
                    self.sigma * (1.0 - y * y / 3.0)
                } else {
                    let s = y.sin() / y;
                    self.sigma * s * s
                }
            }
            PhiKind::SmoothBump => {
                // Φ(x) = 2∫_0^σ Φ̂(t) cos(2πxt) dt.
                let extra = (4.0 * self.sigma * x.abs()).ceil() as usize;
                let mut acc = Compensated::new();
                if extra == 0 {
                    for &(t, w) in self.cached.iter() {
                        acc.add(w * (2.0 * PI * x * t).cos());
                    }
                } else {
                    for (t, w) in bump_nodes(self.sigma, BUMP_BASE_PANELS + extra) {
                        acc.add(w * (2.0 * PI * x * t).cos());
                    }
                }
                2.0 * acc.value()
            }
        }
    }

    /// Φ(0).
    pub fn phi_zero(&self) -> f64 {
        self.phi(0.0)
    }

    /// ∫_{−σ}^{σ} Φ̂(t) e(xt) dt by adaptive quadrature (independent of [`Self::phi`]).
    pub fn inverse_transform(&self, x: f64) -> Result<f64> {
        let panels = 8 + (4.0 * self.sigma * x.abs()).ceil() as usize;
        let q = adaptive(
            |t| self.phi_hat(t) * (2.0 * PI * x * t).cos(),
            -self.sigma,
            self.sigma,
            QUAD_TOL,
            panels,
        )?;
        Ok(q.value)
    }
}

/// Smooth level weight Ψ: the standard C∞ bump on [a, b] with peak value
/// `height` (1 unless rescaled).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightFunction {
    pub a: f64,
    pub b: f64,
    pub height: f64,
    /// ∫Ψ = Ψ̂(0).
    pub psi_hat_zero: f64,
}

/// Construct Ψ on [a, b].
pub fn make_weight(a: f64, b: f64) -> Result<WeightFunction> {
    if !(a > 0.0 && a < b && b.is_finite()) {
        return Err(Error::Domain(format!("weight support needs 0 < a < b, got [{a}, {b}]")));
    }
    let mut w = WeightFunction {
        a,
        b,
        height: 1.0,
        psi_hat_zero: 0.0,
    };
    w.psi_hat_zero = adaptive(|x| w.psi(x), a, b, QUAD_TOL * (b - a), 8)?.value;
    Ok(w)
}

impl WeightFunction {
    /// c·Ψ for a positive constant c.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("weight scale must be positive, got {c}")));
        }
        Ok(Self {
            height: self.height * c,
            psi_hat_zero: self.psi_hat_zero * c,
            ..*self
        })
    }

    /// Ψ(x).
    pub fn psi(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let y = (2.0 * x - self.a - self.b) / (self.b - self.a);
        self.height * (1.0 - 1.0 / (1.0 - y * y)).exp()
    }

    /// Integers q with Ψ(q/Q) > 0.
    pub fn level_range(&self, big_q: f64) -> std::ops::RangeInclusive<u64> {
        let lo = (self.a * big_q).floor() as u64 + 1;
        let hi = (self.b * big_q).ceil() as u64 - 1;
        lo..=hi
    }
}

/// C∞ transition: 0 for t ≤ 0, 1 for t ≥ 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |u: f64| (-1.0 / u).exp();
    let a = f(t);
    let b = f(1.0 - t);
    a / (a + b)
}

/// Dyadic window V(x) = G(x) − G(x/2), with G the smooth ramp from 0 at
/// x = 1/2 to 1 at x = 1. Supported on [1/2, 2] ⊂ [1/2, 3]; the sum
/// Σ_{j≥0} V(x/2^j) telescopes to G(x) = 1 for x ≥ 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DyadicWindow;

pub fn make_dyadic_window() -> DyadicWindow {
    DyadicWindow
}

impl DyadicWindow {
    fn ramp(x: f64) -> f64 {
        smooth_step(2.0 * x - 1.0)
    }

    /// V(x).
    pub fn v(&self, x: f64) -> f64 {
        if x <= 0.5 || x >= 2.0 {
            return 0.0;
        }
        Self::ramp(x) - Self::ramp(0.5 * x)
    }

    /// Support endpoints.
    pub fn support(&self) -> (f64, f64) {
        (0.5, 2.0)
    }
}

/// ∫_a^b f(x) x^{s−1} dx by adaptive Gauss–Legendre, absolute tolerance 1e−10.
pub fn mellin_numeric<F: Fn(f64) -> Complex64>(f: F, s: Complex64, support: (f64, f64)) -> Result<Complex64> {
    let (a, b) = support;
    if !(a > 0.0 && a < b) {
        return Err(Error::Domain(format!("Mellin support must lie in (0,∞), got [{a}, {b}]")));
    }
    let mut bad = None;
    let panels = 8 + (s.im.abs() * (b / a).ln()).ceil() as usize;
    let q = adaptive_complex(
        |x| {
            let v = f(x);
            if !v.re.is_finite() || !v.im.is_finite() {
                bad = Some(x);
                return Complex64::new(0.0, 0.0);
            }
            v * Complex64::new(x, 0.0).powc(s - 1.0)
        },
        a,
        b,
        QUAD_TOL,
        panels,
    )?;
    if let Some(x) = bad {
        return Err(Error::Domain(format!("non-finite sample at x = {x}")));
    }
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fejer_closed_forms() {
        let p = make_fejer(1.0).unwrap();
        assert_eq!(p.phi(0.0), 1.0);
        assert_eq!(p.phi_hat(0.0), 1.0);
        assert_eq!(p.phi_hat(2.0), 0.0);
        assert!(make_fejer(0.0).is_err());
    }

    #[test]
    fn bump_is_even_and_normalised() {
        let p = make_smooth_bump(1.0).unwrap();
        assert_eq!(p.phi_hat(0.0), 1.0);
        assert_eq!(p.phi_hat(1.0), 0.0);
        for x in [0.3, 1.7] {
            assert!((p.phi(x) - p.phi(-x)).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_support() {
        let w = make_weight(1.0, 2.0).unwrap();
        assert!(w.psi(1.5) > 0.0);
        assert_eq!(w.psi(1.0), 0.0);
        assert_eq!(w.psi(2.0), 0.0);
        assert_eq!(w.level_range(10.0), 11..=19);
        assert!(make_weight(2.0, 1.0).is_err());
    }

    #[test]
    fn window_partition_spot_values() {
        let v = make_dyadic_window();
        for x in [1.0, 7.0, 1000.0] {
            let s: f64 = (0..=20).map(|j| v.v(x / 2f64.powi(j))).sum();
            assert!((s - 1.0).abs() < 1e-10, "x = {x}: {s}");
        }
    }
}
