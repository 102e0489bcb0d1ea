//! Kuznetsov-layer transforms: the kernel h_u(ξ) = J_{k−1}(ξ)W(ξ/X)e(uξ),
//! its Bessel transforms φ₊ and φ_h, the separated kernel H(ξ, λ) with its
//! two-dimensional Fourier transform, and empirical verification of the
//! transform bounds.
//!
//! φ₊ is evaluated through the cosine double integral
//!
//!   φ₊(z) = 8 ∫_0^∞ ∫_0^∞ cos(x cosh y) cos(2zy) h(x) dy dx/x,
//!
//! which avoids Bessel functions of complex order. At z → 0 it reduces to
//! −4π∫Y₀(x)h(x)dx/x, because ∫_0^∞ cos(x cosh y) dy = −(π/2)Y₀(x).

use crate::error::{Error, Result};
use crate::quad::{adaptive, adaptive_complex, GaussLegendre};
use crate::specfun;
use crate::sum::CompensatedComplex;
use crate::testfn::{TestFunctionPair, WeightFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Target absolute error of φ₊.
pub const PHI_PLUS_TOL: f64 = 1e-8;
/// Target absolute error of φ_h.
pub const PHI_H_TOL: f64 = 1e-10;
/// Target absolute error of Ĥ.
pub const HAT_H_TOL: f64 = 1e-8;
/// Relative level at which the crude y-envelope e^{2|δ|y}·min(1, e^{−y}/X)
/// is considered negligible.
pub const Y_ENVELOPE_CUTOFF: f64 = 1e-14;

/// φ₊ is also resolved to this fraction of ∫|h(x)|dx/x, so that tiny
/// kernels (small X) are computed to relative rather than only absolute
/// accuracy.
pub const PHI_PLUS_REL: f64 = 1e-7;

/// Width of the y-chunks of the outer φ₊ integral.
const Y_CHUNK: f64 = 0.5;
/// Once past the stationary region, integration stops after this many
/// consecutive chunks whose contribution is below `CHUNK_QUIET · tol`.
const QUIET_CHUNKS: usize = 2;
const CHUNK_QUIET: f64 = 1e-3;
/// Above this value of ω·X the x-integral is integrated by parts once.
const IBP_THRESHOLD: f64 = 4.0;

fn e(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x)
}

/// Smooth window on (a, b), equal to `height` on [inner_a, inner_b], with
/// C∞ ramps in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub a: f64,
    pub inner_a: f64,
    pub inner_b: f64,
    pub b: f64,
    pub height: f64,
}

/// exp(−1/t) and its derivative, 0 for t ≤ 0.
fn flat(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else {
        let v = (-1.0 / t).exp();
        (v, v / (t * t))
    }
}

/// Smooth step s(t) (0 at t ≤ 0, 1 at t ≥ 1) and s'(t).
fn step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let (f, df) = flat(t);
    let (g, dg) = flat(1.0 - t);
    let s = f + g;
    (f / s, (df * g + f * dg) / (s * s))
}

impl Window {
    pub fn new(a: f64, inner_a: f64, inner_b: f64, b: f64) -> Result<Self> {
        if !(0.0 < a && a < inner_a && inner_a <= inner_b && inner_b < b && b.is_finite()) {
            return Err(Error::Domain(format!(
                "window needs 0 < a < inner_a ≤ inner_b < b, got ({a}, {inner_a}, {inner_b}, {b})"
            )));
        }
        Ok(Self {
            a,
            inner_a,
            inner_b,
            b,
            height: 1.0,
        })
    }

    /// Standard window on (1, 2) with plateau [1.25, 1.75].
    pub fn standard() -> Self {
        Self::new(1.0, 1.25, 1.75, 2.0).expect("valid constants")
    }

    /// The same window multiplied by `c` (c = 0 gives the zero window).
    pub fn scaled(self, c: f64) -> Self {
        Self {
            height: self.height * c,
            ..self
        }
    }

    /// (W(t), W'(t)).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        if t <= self.a || t >= self.b {
            return (0.0, 0.0);
        }
        let (l, dl) = step((t - self.a) / (self.inner_a - self.a));
        let (r, dr) = step((self.b - t) / (self.b - self.inner_b));
        let dl = dl / (self.inner_a - self.a);
        let dr = -dr / (self.b - self.inner_b);
        (self.height * l * r, self.height * (dl * r + l * dr))
    }
}

/// Parameters of h_u(ξ) = J_{k−1}(ξ)W(ξ/X)e(uξ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub k: u32,
    pub x: f64,
    pub u: f64,
    pub window: Window,
}

impl KernelSpec {
    pub fn new(k: u32, x: f64, u: f64, window: Window) -> Result<Self> {
        if k < 4 || k % 2 == 1 {
            return Err(Error::Domain(format!("weight must be even and at least 4, got {k}")));
        }
        if !(x > 0.0 && x.is_finite()) || !u.is_finite() {
            return Err(Error::Domain(format!("need X > 0 and finite u, got X={x}, u={u}")));
        }
        Ok(Self { k, x, u, window })
    }
}

/// A compactly supported kernel on (0, ∞) with a known derivative.
pub trait Kernel: Sync {
    /// Interval outside which the kernel vanishes.
    fn support(&self) -> (f64, f64);
    /// (h(ξ), h'(ξ)).
    fn eval(&self, xi: f64) -> (Complex64, Complex64);
    /// Largest frequency of the kernel's own oscillation (rad per unit ξ).
    fn frequency(&self) -> f64;
}

impl Kernel for KernelSpec {
    fn support(&self) -> (f64, f64) {
        (self.window.a * self.x, self.window.b * self.x)
    }

    fn eval(&self, xi: f64) -> (Complex64, Complex64) {
        let (w, dw) = self.window.eval(xi / self.x);
        if w == 0.0 && dw == 0.0 {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let nu = self.k - 1;
        let j = specfun::j(nu, xi);
        let dj = 0.5 * (specfun::j(nu - 1, xi) - specfun::j(nu + 1, xi));
        let phase = e(self.u * xi);
        let amp = j * w;
        let damp = dj * w + j * dw / self.x;
        let value = phase * amp;
        let deriv = phase * (Complex64::new(damp, 0.0) + Complex64::new(0.0, 2.0 * PI * self.u) * amp);
        (value, deriv)
    }

    fn frequency(&self) -> f64 {
        1.0 + 2.0 * PI * self.u.abs()
    }
}

/// Linear combination Σ c_i h_i of kernels.
pub struct Combination<'a> {
    pub terms: Vec<(Complex64, &'a dyn Kernel)>,
}

impl Kernel for Combination<'_> {
    fn support(&self) -> (f64, f64) {
        self.terms.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, h)| {
            let (a, b) = h.support();
            (lo.min(a), hi.max(b))
        })
    }

    fn eval(&self, xi: f64) -> (Complex64, Complex64) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for (c, h) in &self.terms {
            let (hv, hd) = h.eval(xi);
            v += c * hv;
            d += c * hd;
        }
        (v, d)
    }

    fn frequency(&self) -> f64 {
        self.terms.iter().map(|(_, h)| h.frequency()).fold(0.0, f64::max)
    }
}

/// h_u(ξ) for ξ > 0.
pub fn h_u_eval(spec: &KernelSpec, xi: f64) -> Result<Complex64> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("h_u needs ξ > 0, got {xi}")));
    }
    Ok(spec.eval(xi).0)
}

/// Quadrature nodes on the kernel support with the values of h(x)/x and
/// (h(x)/x)', sized to resolve frequencies up to `omega`.
struct XGrid {
    x: Vec<f64>,
    f: Vec<Complex64>,
    df: Vec<Complex64>,
}

impl XGrid {
    fn new<K: Kernel + ?Sized>(h: &K, omega: f64) -> Self {
        let (a, b) = h.support();
        let len = b - a;
        let freq = omega + h.frequency();
        // One 20-point panel per period of the fastest oscillation, and at
        // least enough panels to resolve the window ramps.
        let panels = ((freq * len / (2.0 * PI)).ceil() as usize).max(48);
        let rule = GaussLegendre::g20();
        let hw = 0.5 * len / panels as f64;
        let n = panels * rule.nodes.len();
        let mut grid = Self {
            x: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            df: Vec::with_capacity(n),
        };
        for i in 0..panels {
            let mid = a + hw * (2 * i + 1) as f64;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = mid + hw * t;
                let (v, d) = h.eval(x);
                grid.x.push(x);
                grid.f.push(v / x * (w * hw));
                grid.df.push((d / x - v / (x * x)) * (w * hw));
            }
        }
        grid
    }

    /// G(y) = ∫ cos(x cosh y) h(x) dx/x, integrated by parts once when the
    /// cosine oscillates fast: G = −(1/ω)∫ (h/x)' sin(ωx) dx.
    fn inner(&self, y: f64, x_scale: f64) -> Complex64 {
        let omega = y.cosh();
        let mut acc = CompensatedComplex::new();
        if omega * x_scale > IBP_THRESHOLD {
            for (x, d) in self.x.iter().zip(&self.df) {
                acc.add(d * (omega * x).sin());
            }
            -acc.value() / omega
        } else {
            for (x, f) in self.x.iter().zip(&self.f) {
                acc.add(f * (omega * x).cos());
            }
            acc.value()
        }
    }
}

/// ∫|h(x)|dx/x on a fixed grid.
fn kernel_mass<K: Kernel + ?Sized>(h: &K) -> f64 {
    let grid = XGrid::new(h, 0.0);
    grid.f.iter().map(|f| f.norm()).sum()
}

/// Largest y at which e^{2|δ|y}·min(1, e^{−y}/X) is still above
/// `Y_ENVELOPE_CUTOFF` times its maximum over y ≥ 0.
pub fn y_truncation(x_scale: f64, delta: f64) -> f64 {
    let d = 2.0 * delta.abs();
    let env = |y: f64| (d * y).exp() * (1.0f64).min((-y).exp() / x_scale);
    let mut peak = 0.0f64;
    let mut y = 0.0;
    while y < 200.0 {
        peak = peak.max(env(y));
        y += 0.01;
    }
    let target = Y_ENVELOPE_CUTOFF * peak;
    let mut y = 0.0;
    let mut last_above = 0.0;
    while y < 200.0 {
        if env(y) >= target {
            last_above = y;
        }
        y += 0.01;
    }
    last_above + 0.01
}

/// φ₊(r) for r real or complex with |Im r| < 1/2, to absolute error
/// `PHI_PLUS_TOL`.
pub fn phi_plus(spec: &KernelSpec, r: Complex64) -> Result<Complex64> {
    phi_plus_kernel(spec, spec.x, r, PHI_PLUS_TOL)
}

/// φ₊ of a general kernel; `x_scale` is the size of its support, used for
/// the integration-by-parts switch and the y truncation.
pub fn phi_plus_kernel<K: Kernel + ?Sized>(h: &K, x_scale: f64, r: Complex64, tol: f64) -> Result<Complex64> {
    if !(r.im.abs() < 0.5) || !r.re.is_finite() {
        return Err(Error::Domain(format!("φ₊ needs |Im r| < 1/2, got {r}")));
    }
    let y_max = y_truncation(x_scale, r.im);
    let mass = kernel_mass(h);
    if mass == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let tol = tol.min(PHI_PLUS_REL * mass);
    // Beyond cosh y ≈ (kernel frequency)·(ramp resolution), the x-integral
    // no longer has a stationary point and decays quickly.
    let stationary = (h.frequency() + 2.0).acosh();
    let chunks = (y_max / Y_CHUNK).ceil() as usize;
    let mut total = CompensatedComplex::new();
    let mut err = 0.0;
    let mut quiet = 0;
    let chunk_tol = tol / 16.0;
    for i in 0..chunks {
        let y0 = i as f64 * Y_CHUNK;
        let y1 = (y0 + Y_CHUNK).min(y_max);
        let grid = XGrid::new(h, y1.cosh());
        // The y-integrand oscillates with phase x·cosh y: start from about four
        // periods per panel and let the bisection refine.
        let (_, xb) = h.support();
        let initial = 1 + (xb * (y1.sinh() - y0.sinh()) / (8.0 * PI)).ceil() as usize;
        let q = adaptive_complex(
            |y| (Complex64::new(2.0, 0.0) * r * y).cos() * grid.inner(y, x_scale),
            y0,
            y1,
            chunk_tol,
            initial,
        );
        let q = match q {
            Ok(q) => q,
            Err(Error::Accuracy { error, .. }) => {
                return Err(Error::Accuracy {
                    estimate: (8.0 * total.value()).norm(),
                    error: 8.0 * (err + error),
                })
            }
            Err(other) => return Err(other),
        };
        total.add(q.value);
        err += q.error;
        if y1 > stationary && 8.0 * q.value.norm() < CHUNK_QUIET * tol {
            quiet += 1;
            if quiet >= QUIET_CHUNKS {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(8.0 * total.value())
}

/// φ_h(ℓ) = 4 i^k ∫_0^∞ J_{ℓ−1}(ξ) h_u(ξ) dξ/ξ for even ℓ ≥ 2.
pub fn phi_h(spec: &KernelSpec, ell: u32) -> Result<Complex64> {
    phi_h_with_tol(spec, ell, PHI_H_TOL)
}

/// [`phi_h`] at a caller-chosen absolute tolerance.
pub fn phi_h_with_tol(spec: &KernelSpec, ell: u32, tol: f64) -> Result<Complex64> {
    if ell < 2 || ell % 2 == 1 {
        return Err(Error::Domain(format!("φ_h needs even ℓ ≥ 2, got {ell}")));
    }
    let (a, b) = spec.support();
    let ik = if spec.k % 4 == 0 { 1.0 } else { -1.0 };
    let panels = 8 + ((b - a) * spec.frequency() / PI).ceil() as usize;
    let q = adaptive_complex(
        |xi| spec.eval(xi).0 * (specfun::j(ell - 1, xi) / xi),
        a,
        b,
        tol / 4.0,
        panels,
    )?;
    Ok(4.0 * ik * q.value)
}

/// The separated kernel H(ξ, λ) built from Ψ, Φ̂ and the scales X, P, Q.
#[derive(Debug, Clone)]
pub struct SeparatedKernel {
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub psi: WeightFunction,
    pub phi: TestFunctionPair,
}

impl SeparatedKernel {
    pub fn new(x: f64, p: f64, q: f64, psi: WeightFunction, phi: TestFunctionPair) -> Result<Self> {
        if !(x > 0.0 && p > 0.0 && q > 0.0) {
            return Err(Error::Domain(format!("need X, P, Q > 0, got {x}, {p}, {q}")));
        }
        if psi.a * q <= 1.0 {
            return Err(Error::Domain(format!(
                "log(tQ) must be positive on the weight support, got a·Q = {}",
                psi.a * q
            )));
        }
        Ok(Self { x, p, q, psi, phi })
    }

    /// λ-interval outside which H vanishes (from the support of Φ̂).
    pub fn lambda_support(&self) -> (f64, f64) {
        let span = self.phi.sigma * (self.psi.b * self.q).ln();
        ((-span).exp() / self.p, span.exp() / self.p)
    }

    /// H at t = (X/ξ)√λ and λ.
    fn at(&self, t: f64, lambda: f64) -> f64 {
        let w = self.psi.psi(t);
        if w == 0.0 {
            return 0.0;
        }
        let denom = (t * self.q).ln();
        w * self.q.ln() / denom * self.phi.phi_hat((lambda.ln() + self.p.ln()) / denom)
    }
}

/// H(ξ, λ) = Ψ(t)·log Q / log(tQ) · Φ̂((log λ + log P)/log(tQ)), t = (X/ξ)√λ.
pub fn separated_h(sk: &SeparatedKernel, xi: f64, lambda: f64) -> Result<f64> {
    if !(xi > 0.0 && lambda > 0.0) {
        return Err(Error::Domain(format!("H needs ξ, λ > 0, got ({xi}, {lambda})")));
    }
    let t = sk.x / xi * lambda.sqrt();
    if sk.psi.psi(t) != 0.0 && t * sk.q <= 1.0 {
        return Err(Error::Domain(format!("log(tQ) ≤ 0 at t = {t}")));
    }
    Ok(sk.at(t, lambda))
}

/// Ĥ(u, v) = ∫∫ H(ξ, λ) e(−ξu − λv) dξ dλ.
///
/// With λ = e^s/P and ξ = X√λ/t the domain becomes the rectangle
/// |s| ≤ σ log(bQ), t ∈ [a, b]; dξ dλ = (X√λ/t²)·λ dt ds.
pub fn hat_h(sk: &SeparatedKernel, u: f64, v: f64) -> Result<Complex64> {
    hat_h_with_tol(sk, u, v, HAT_H_TOL)
}

/// [`hat_h`] at a caller-chosen absolute tolerance.
pub fn hat_h_with_tol(sk: &SeparatedKernel, u: f64, v: f64, tol: f64) -> Result<Complex64> {
    let span = sk.phi.sigma * (sk.psi.b * sk.q).ln();
    let (a, b) = (sk.psi.a, sk.psi.b);
    let inner_tol = tol / (4.0 * span);
    let inner = |s: f64| -> Complex64 {
        let lambda = s.exp() / sk.p;
        let root = lambda.sqrt();
        let scale = sk.x * root;
        let panels = 4 + (scale * u.abs() * (1.0 / a - 1.0 / b)).ceil() as usize;
        adaptive_complex(
            |t| e(-u * scale / t - v * lambda) * (sk.at(t, lambda) * scale / (t * t) * lambda),
            a,
            b,
            inner_tol,
            panels,
        )
        .map(|q| q.value)
        .unwrap_or_else(|_| Complex64::new(f64::NAN, 0.0))
    };
    let outer_panels = 16 + (span * (1.0 + v.abs() / sk.p)).ceil() as usize;
    let q = adaptive_complex(inner, -span, span, tol / 2.0, outer_panels);
    // An inner failure surfaces as a NaN node value.
    match q {
        Ok(q) if q.value.is_finite() => Ok(q.value),
        Ok(q) => Err(Error::Accuracy {
            estimate: f64::NAN,
            error: q.error,
        }),
        Err(e) => Err(e),
    }
}

/// Which bound a grid point tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundCase {
    /// Real spectral parameter: (1+|log X|)/F·(F/(1+|r|))^C·min{X^{k−1}, X^{−1/2}}.
    RealSpectral,
    /// r = iδ with |δ| < 1/4: (X^{−1/2} + (1+|u|)^{1/2})·min{X^{k−1}, X^{−1/2}}.
    Exceptional,
    /// z = γ + iδ, δ ≠ 0: (1+|u|)·min{X^{k−1−2|δ|}, X^{−1/2}}.
    ComplexShift,
}

/// The operative F = (1+|u|)(1+X).
pub fn f_parameter(x: f64, u: f64) -> f64 {
    (1.0 + u.abs()) * (1.0 + x)
}

/// Decay exponent C used in the real-spectral envelope.
pub const DECAY_EXPONENT: f64 = 2.0;

/// Bound envelope of a case at (k, X, u, z).
pub fn envelope(case: BoundCase, k: u32, x: f64, u: f64, z: Complex64) -> f64 {
    let small = |p: f64| x.powf(p).min(x.powf(-0.5));
    match case {
        BoundCase::RealSpectral => {
            let f = f_parameter(x, u);
            (1.0 + x.ln().abs()) / f * (f / (1.0 + z.norm())).powf(DECAY_EXPONENT) * small((k - 1) as f64)
        }
        BoundCase::Exceptional => (x.powf(-0.5) + (1.0 + u.abs()).sqrt()) * small((k - 1) as f64),
        BoundCase::ComplexShift => (1.0 + u.abs()) * small((k - 1) as f64 - 2.0 * z.im.abs()),
    }
}

/// Cases a spectral point belongs to.
pub fn cases_of(z: Complex64) -> Vec<BoundCase> {
    let mut out = Vec::new();
    if z.im == 0.0 {
        out.push(BoundCase::RealSpectral);
    }
    if z.re == 0.0 && z.im.abs() < 0.25 {
        out.push(BoundCase::Exceptional);
    }
    if z.im != 0.0 {
        out.push(BoundCase::ComplexShift);
    }
    out
}

/// A grid of (X, u, z) points at which φ₊ is compared with the envelopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundGrid {
    pub k: u32,
    pub window: Window,
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub zs: Vec<Complex64>,
}

impl BoundGrid {
    /// X log-spaced on [1/4, 8] with 2^level·4 + 1 points, u ∈ {0, 1, 2},
    /// z over real, imaginary and shifted points.
    pub fn standard(k: u32, level: u32) -> Self {
        let n = 4usize << level;
        let xs = (0..=n)
            .map(|i| 0.25 * 32f64.powf(i as f64 / n as f64))
            .collect();
        let zs = vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(3.0, 0.0),
            Complex64::new(0.0, 0.1),
            Complex64::new(0.0, 0.2),
            Complex64::new(1.0, 0.2),
            Complex64::new(1.0, 0.4),
        ];
        Self {
            k,
            window: Window::standard(),
            xs,
            us: vec![0.0, 1.0, 2.0],
            zs,
        }
    }
}

/// Per-case maximum ratio |φ₊| / envelope (the fitted constant).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: BoundCase,
    pub points: usize,
    pub max_ratio: f64,
    pub argmax: (f64, f64, Complex64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub cases: Vec<CaseReport>,
}

impl BoundReport {
    pub fn case(&self, case: BoundCase) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.case == case)
    }

    /// Every case is finite and its fitted constant changes by at most a
    /// factor `factor` relative to `other` (a refined grid).
    pub fn stable_against(&self, other: &BoundReport, factor: f64) -> bool {
        self.cases.iter().all(|c| {
            other.case(c.case).is_some_and(|o| {
                c.max_ratio.is_finite()
                    && o.max_ratio.is_finite()
                    && c.max_ratio > 0.0
                    && o.max_ratio / c.max_ratio <= factor
                    && c.max_ratio / o.max_ratio <= factor
            })
        })
    }
}

/// Evaluate φ₊ over the grid (in parallel) and report the largest ratio to
/// each envelope.
pub fn verify_hplus_bounds(grid: &BoundGrid) -> Result<BoundReport> {
    let mut points = Vec::new();
    for &x in &grid.xs {
        for &u in &grid.us {
            for &z in &grid.zs {
                points.push((x, u, z));
            }
        }
    }
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|&(x, u, z)| {
            let spec = KernelSpec::new(grid.k, x, u, grid.window)?;
            Ok(phi_plus(&spec, z)?.norm())
        })
        .collect();
    let mut cases: Vec<CaseReport> = Vec::new();
    for (&(x, u, z), v) in points.iter().zip(values) {
        let v = v?;
        for case in cases_of(z) {
            let ratio = v / envelope(case, grid.k, x, u, z);
            let entry = match cases.iter_mut().find(|c| c.case == case) {
                Some(c) => c,
                None => {
                    cases.push(CaseReport {
                        case,
                        points: 0,
                        max_ratio: 0.0,
                        argmax: (x, u, z),
                    });
                    cases.last_mut().expect("just pushed")
                }
            };
            entry.points += 1;
            if ratio > entry.max_ratio {
                entry.max_ratio = ratio;
                entry.argmax = (x, u, z);
            }
        }
    }
    Ok(BoundReport { cases })
}

/// Plain ∫_a^b f by adaptive quadrature; shared by tests of this module.
pub fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    Ok(adaptive(f, a, b, tol, 16)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_derivative_matches_difference_quotient() {
        let w = Window::standard();
        for t in [1.05, 1.2, 1.5, 1.8, 1.95] {
            let h = 1e-6;
            let fd = (w.eval(t + h).0 - w.eval(t - h).0) / (2.0 * h);
            assert!((fd - w.eval(t).1).abs() < 1e-6, "t={t}");
        }
        assert_eq!(w.eval(1.5).0, 1.0);
        assert_eq!(w.eval(0.99).0, 0.0);
    }

    #[test]
    fn kernel_derivative_matches_difference_quotient() {
        let spec = KernelSpec::new(12, 3.0, 0.7, Window::standard()).unwrap();
        for xi in [3.3, 4.0, 4.6, 5.9] {
            let h = 1e-6;
            let fd = (spec.eval(xi + h).0 - spec.eval(xi - h).0) / (2.0 * h);
            assert!((fd - spec.eval(xi).1).norm() < 1e-6, "ξ={xi}");
        }
    }

    #[test]
    fn y_truncation_grows_with_delta() {
        assert!(y_truncation(1.0, 0.2) > y_truncation(1.0, 0.0));
        assert!(y_truncation(1.0, 0.0) > 30.0);
    }
}
