//! Special functions: Bessel J of integer order with two evaluation regimes,
//! the Bessel envelope used by truncation bounds, and the complex Gamma function.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Base constant of the envelope |J_{k−1}(x)| ≤ C·min{x^{−1/2}, x^{k−1}}.
///
/// A single constant cannot serve every order: sup_x √x·|J_ν(x)| grows like
/// ν^{1/6} near the turning point x ≈ ν (already 1.033 for ν = 11), so
/// [`j_envelope_constant`] raises it for higher orders.
pub const J_ENVELOPE_CONSTANT: f64 = 1.0;

/// Order-dependent envelope constant max{1, 0.8·(k−1)^{1/6}}.
pub fn j_envelope_constant(k: u32) -> f64 {
    J_ENVELOPE_CONSTANT.max(0.8 * ((k.max(1) - 1) as f64).powf(1.0 / 6.0))
}

/// Series terms are summed until |term| ≤ SERIES_STOP·|sum|.
pub const SERIES_STOP: f64 = 1e-17;

/// Minimum argument at which the asymptotic regime is used.
pub const ASYMPTOTIC_MIN_X: f64 = 30.0;

/// Which evaluation regime produced a Bessel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BesselRegime {
    Series,
    Asymptotic,
}

/// A Bessel value with provenance and an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesselEval {
    pub order: u32,
    pub value: f64,
    pub regime: BesselRegime,
    pub est_abs_error: f64,
}

/// Argument above which the asymptotic expansion replaces the power series.
pub fn regime_switch(order: u32) -> f64 {
    ASYMPTOTIC_MIN_X.max(2.0 * order as f64)
}

/// J_order(x) for real x, choosing the regime by [`regime_switch`].
pub fn bessel_j(order: u32, x: f64) -> Result<BesselEval> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j: non-finite argument {x}")));
    }
    if x < 0.0 {
        let mut e = bessel_j(order, -x)?;
        if order % 2 == 1 {
            e.value = -e.value;
        }
        return Ok(e);
    }
    if x <= regime_switch(order) {
        Ok(bessel_j_series(order, x))
    } else {
        Ok(bessel_j_asymptotic(order, x))
    }
}

/// Plain value of J_order(x); panics only on non-finite input.
#[inline]
pub fn j(order: u32, x: f64) -> f64 {
    bessel_j(order, x).expect("finite argument").value
}

// ---- power series -----------------------------------------------------------

/// Power series Σ (−1)^l (x/2)^{2l+ν} / (l!(l+ν)!), x ≥ 0.
///
/// The series is first summed in double precision; if the largest term
/// exceeds the result by more than three orders of magnitude (cancellation)
/// it is re-summed in double-double arithmetic.
pub fn bessel_j_series(order: u32, x: f64) -> BesselEval {
    let nu = order as f64;
    let h = 0.5 * x;
    if x == 0.0 {
        return BesselEval {
            order,
            value: if order == 0 { 1.0 } else { 0.0 },
            regime: BesselRegime::Series,
            est_abs_error: 0.0,
        };
    }
    let h2 = h * h;
    let mut t = 1.0f64;
    for jj in 1..=order {
        t *= h / jj as f64;
    }
    let mut sum = t;
    let mut max_term = t.abs();
    let mut l = 0u64;
    loop {
        t *= -h2 / ((l + 1) as f64 * (l as f64 + 1.0 + nu));
        l += 1;
        sum += t;
        max_term = max_term.max(t.abs());
        if t.abs() <= SERIES_STOP * sum.abs() && (l as f64) > h || t == 0.0 {
            break;
        }
    }
    let terms = l as f64 + 1.0;
    if max_term <= 1e3 * sum.abs() {
        return BesselEval {
            order,
            value: sum,
            regime: BesselRegime::Series,
            est_abs_error: (4.0 * terms * f64::EPSILON * max_term).max(t.abs()),
        };
    }
    // Cancellation-prone: re-sum in double-double.
    let h2dd = Dd::from_prod(h, h);
    let mut tdd = Dd::from(1.0);
    for jj in 1..=order {
        tdd = tdd.mul_f64(h).div_f64(jj as f64);
    }
    let mut sdd = tdd;
    let mut l = 0u64;
    loop {
        let denom = (l + 1) as f64 * (l as f64 + 1.0 + nu);
        tdd = tdd.mul(h2dd).div_f64(denom).neg();
        l += 1;
        sdd = sdd.add(tdd);
        let s = sdd.hi.abs();
        if tdd.hi.abs() <= 1e-33 * s.max(f64::MIN_POSITIVE) && (l as f64) > h || tdd.hi == 0.0 {
            break;
        }
        if l > 100_000 {
            break;
        }
    }
    let terms = l as f64 + 1.0;
    let value = sdd.hi + sdd.lo;
    BesselEval {
        order,
        value,
        regime: BesselRegime::Series,
        est_abs_error: 8.0 * terms * 1.2e-32 * max_term + f64::EPSILON * value.abs(),
    }
}

// ---- Hankel asymptotic expansion -------------------------------------------

/// Hankel expansion J_ν(x) = √(2/(πx))·(P cos ω − Q sin ω), ω = x − (2ν+1)π/4.
///
/// Both series are summed while their terms decrease; the remainder is
/// bounded by the first omitted term.
pub fn bessel_j_asymptotic(order: u32, x: f64) -> BesselEval {
    let mu = 4.0 * (order as f64).powi(2);
    let mut p = 0.0f64;
    let mut q = 0.0f64;
    let mut term = 1.0f64; // a_k(ν)/x^k
    let mut k = 0u32;
    let mut last = f64::INFINITY;
    let mut omitted = 0.0;
    let mut max_term = 1.0f64;
    loop {
        if term.abs() > last && (k as f64) > 0.5 * order as f64 {
            omitted = term.abs();
            break;
        }
        // a_k term sign pattern: P = a0 − a2 + a4 − …, Q = a1 − a3 + …
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        max_term = max_term.max(term.abs());
        last = term.abs();
        if term.abs() <= SERIES_STOP * p.abs().max(q.abs()) && (k as f64) > 0.5 * order as f64 {
            omitted = 0.0;
            break;
        }
        let kk = (k + 1) as f64;
        let odd = 2.0 * kk - 1.0;
        term *= (mu - odd * odd) / (kk * 8.0 * x);
        k += 1;
        if k > 500 || term == 0.0 {
            break;
        }
    }
    // ω = x − (2ν+1)π/4 with the phase shift reduced exactly modulo 2π.
    let shift = ((2 * order as u64 + 1) % 8) as f64 * PI / 4.0;
    let (sx, cx) = x.sin_cos();
    let (ss, cs) = shift.sin_cos();
    let cw = cx * cs + sx * ss;
    let sw = sx * cs - cx * ss;
    let amp = (2.0 / (PI * x)).sqrt();
    let value = amp * (p * cw - q * sw);
    BesselEval {
        order,
        value,
        regime: BesselRegime::Asymptotic,
        est_abs_error: amp * (omitted + 8.0 * f64::EPSILON * max_term * (1.0 + x * f64::EPSILON / f64::EPSILON.sqrt()))
            + 2.0 * f64::EPSILON * x * amp,
    }
}

/// Envelope C_k·min{x^{−1/2}, x^{k−1}} for |J_{k−1}(x)|.
pub fn j_envelope(k: u32, x: f64) -> f64 {
    assert!(k >= 1 && x > 0.0);
    j_envelope_constant(k) * x.powf(-0.5).min(x.powi(k as i32 - 1))
}

/// Sharp small-argument bound |J_ν(x)| ≤ (x/2)^ν / ν! (valid for all x ≥ 0).
pub fn bessel_power_bound(order: u32, x: f64) -> f64 {
    let mut t = 1.0;
    for jj in 1..=order {
        t *= 0.5 * x / jj as f64;
    }
    t.min(1.0)
}

// ---- Gamma -----------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(z) for complex z by the Lanczos approximation, with the reflection
/// formula for Re z < 1/2. Non-positive integers are poles.
pub fn gamma_complex(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(Error::Pole(format!("Gamma has a pole at {}", z.re)));
    }
    if z.re < 0.5 {
        let s = (z * PI).sin();
        let g = gamma_complex(Complex64::new(1.0, 0.0) - z)?;
        return Ok(Complex64::new(PI, 0.0) / (s * g));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS_COEF[0], 0.0);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok((2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x)
}

/// |Γ(1/2 + it)| = √(π / cosh(πt)), used by coefficient envelopes.
pub fn abs_gamma_half_line(t: f64) -> f64 {
    (PI / (PI * t).cosh()).sqrt()
}

// ---- double-double arithmetic ------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    #[inline]
    fn from_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Dd {
        let p = Dd::from_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p.hi, p.lo + self.lo * b);
        Dd { hi, lo }
    }

    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let p = Dd::from_prod(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }

    #[inline]
    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let p = Dd::from_prod(q1, b);
        let (s, e) = two_sum(self.hi, -p.hi);
        let q2 = (s + (e - p.lo + self.lo)) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}
