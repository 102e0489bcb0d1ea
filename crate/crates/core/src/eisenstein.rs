//! Eisenstein series of Γ₀(N): cusp representatives (ab)⁻¹, the Fourier
//! coefficients φ_𝔠(n, t) at primes and squares, Dirichlet L-values on
//! Re s = 1, and empirical checks of the coefficient bounds.

use crate::arith::{self, characters, gcd, mobius, DirichletCharacter};
use crate::error::{Error, Result};
use crate::specfun;
use crate::sum::CompensatedComplex;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// ε used in the bound envelopes.
pub const BOUND_EPSILON: f64 = 0.1;

/// Guard around the pole of principal L-functions at s = 1.
pub const POLE_GUARD: f64 = 1e-6;

/// A cusp (ab)⁻¹ of Γ₀(N) with b | N and a taken modulo (b, N/b).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Cusp {
    pub n: u64,
    pub b: u64,
    pub a: u64,
    /// Largest factor of b coprime to N/b.
    pub b0: u64,
    /// b / b0.
    pub b_prime: u64,
}

impl Cusp {
    /// (b, N/b).
    pub fn width_gcd(&self) -> u64 {
        gcd(self.b, self.n / self.b)
    }

    /// Whether b′ = (b, N/b), the condition under which the prime and
    /// square coefficients can be non-zero.
    pub fn is_balanced(&self) -> bool {
        self.b_prime == self.width_gcd()
    }
}

/// Split b | N as b0·b′ with b0 the largest factor coprime to N/b.
fn split_b(n: u64, b: u64) -> (u64, u64) {
    let rest = n / b;
    let mut b0 = 1;
    for (p, e) in arith::factorize(b) {
        if rest % p != 0 {
            b0 *= p.pow(e);
        }
    }
    (b0, b / b0)
}

/// Complete set of inequivalent cusps of Γ₀(N): b over the divisors of N,
/// a over the units modulo (b, N/b), each a lifted so that gcd(a, N) = 1.
pub fn cusps(n: u64) -> Result<Vec<Cusp>> {
    if n == 0 {
        return Err(Error::Domain("level must be positive".into()));
    }
    let mut out = Vec::new();
    for b in arith::divisors(n) {
        let g = gcd(b, n / b);
        let (b0, b_prime) = split_b(n, b);
        for a0 in 0..g {
            if gcd(a0, g) != 1 {
                continue;
            }
            let mut a = a0;
            while gcd(a, n) != 1 {
                a += g;
            }
            out.push(Cusp {
                n,
                b,
                a,
                b0,
                b_prime,
            });
        }
    }
    Ok(out)
}

// ---- L-values ---------------------------------------------------------------

/// B_{2k}/(2k)! for k = 1, …, 12.
const BERNOULLI_OVER_FACTORIAL: [f64; 12] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -6.914_380_069_644_065e-13,
    1.652_952_814_015_882_7e-14,
    -4.008_927_342_451_314e-16,
    9.822_762_034_033_826e-18,
    -2.424_997_123_188_344_2e-19,
    6.010_250_636_267_196e-21,
    -1.492_536_455_555_004_6e-22,
];

/// (e^w − 1)/w, accurate near w = 0.
fn exprel(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = term;
        for j in 2..12 {
            term = term * w / j as f64;
            acc += term;
        }
        acc
    } else {
        (w.exp() - 1.0) / w
    }
}

/// ζ(s, x) − 1/(s − 1) by Euler–Maclaurin summation (regular at s = 1).
pub fn hurwitz_regular(s: Complex64, x: f64) -> Complex64 {
    let m = 24 + (2.0 * s.norm()).ceil() as u64;
    let mut acc = CompensatedComplex::new();
    for j in 0..m {
        acc.add((-s * (j as f64 + x).ln()).exp());
    }
    let big = m as f64 + x;
    let lb = big.ln();
    // ((M+x)^{1−s} − 1)/(s − 1) = −ln(M+x)·exprel((1−s)ln(M+x)).
    acc.add(-lb * exprel((1.0 - s) * lb));
    let pow = (-s * lb).exp();
    acc.add(0.5 * pow);
    // Σ B_{2k}/(2k)!·s(s+1)…(s+2k−2)·(M+x)^{−s−2k+1}.
    let mut rising = s;
    let mut p = pow / big;
    for (k, &c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if k > 0 {
            let j = (2 * k) as f64;
            rising = rising * (s + j - 1.0) * (s + j);
            p /= big * big;
        }
        acc.add(c * rising * p);
    }
    acc.value()
}

/// ζ(s) for s ≠ 1.
pub fn zeta(s: Complex64) -> Result<Complex64> {
    let d = s - 1.0;
    if d.norm() < POLE_GUARD {
        return Err(Error::Pole(format!("ζ has a pole at s = 1 (s = {s})")));
    }
    Ok(hurwitz_regular(s, 1.0) + 1.0 / d)
}

/// L(s, χ) for Re s > 0.
///
/// Non-principal χ: q^{−s}Σ_a χ(a)ζ(s, a/q) with the Hurwitz values from
/// Euler–Maclaurin; the poles cancel because Σ_a χ(a) = 0. Principal χ:
/// ζ(s)·∏_{p|q}(1 − p^{−s}).
pub fn dirichlet_l(s: Complex64, chi: &DirichletCharacter) -> Result<Complex64> {
    if !(s.re > 0.0) {
        return Err(Error::Domain(format!("L(s, χ) needs Re s > 0, got {s}")));
    }
    let q = chi.modulus();
    if chi.is_principal() {
        let mut v = zeta(s)?;
        for p in arith::prime_divisors(q) {
            v *= 1.0 - (-s * (p as f64).ln()).exp();
        }
        return Ok(v);
    }
    let mut acc = CompensatedComplex::new();
    for a in 1..q {
        let c = chi.evaluate(a as i64);
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        acc.add(c * hurwitz_regular(s, a as f64 / q as f64));
    }
    Ok((-s * (q as f64).ln()).exp() * acc.value())
}

// ---- coefficients -----------------------------------------------------------

/// π^{1/2+it}/Γ(1/2+it).
fn gamma_factor(t: f64) -> Result<Complex64> {
    let z = Complex64::new(0.5, t);
    let pi_pow = (z * PI.ln()).exp();
    Ok(pi_pow / specfun::gamma_complex(z)?)
}

fn cpow(x: f64, s: Complex64) -> Complex64 {
    (s * x.ln()).exp()
}

/// Per-character weights τ(χ̄)/L(1+2it, χ̄²χ₀) for χ mod c, with χ₀ the
/// principal character mod N/b.
fn character_weights(c: u64, level_rest: u64, t: f64) -> Result<Vec<(DirichletCharacter, Complex64)>> {
    let s = Complex64::new(1.0, 2.0 * t);
    characters(c)
        .into_iter()
        .map(|chi| {
            let conj = chi.conj();
            let psi = conj.pow(2).lift(level_rest);
            let l = dirichlet_l(s, &psi)?;
            Ok((chi, conj.gauss_sum() / l))
        })
        .collect()
}

/// (1/φ(c))·Σ_{χ mod c} χ(x)·w_χ.
fn character_average(weights: &[(DirichletCharacter, Complex64)], x: i64) -> Complex64 {
    let mut acc = CompensatedComplex::new();
    for (chi, w) in weights {
        acc.add(chi.evaluate(x) * w);
    }
    acc.value() / weights.len() as f64
}

/// x̄ mod c as a signed representative (0 when c = 1).
fn inv(x: u64, c: u64) -> i64 {
    if c == 1 {
        return 0;
    }
    arith::inverse_mod(x as i64, c).expect("unit modulo c") as i64
}

/// −x·(b0·d²)⁻¹·a reduced modulo c.
fn character_argument(x: u64, b0: u64, d: u64, a: u64, c: u64) -> i64 {
    let unit = ((b0 % c) as u128 * (d % c) as u128 % c as u128 * (d % c) as u128 % c as u128) as u64;
    let r = (x % c) as u128 * inv(unit, c) as u128 % c as u128 * (a % c) as u128 % c as u128;
    -(r as i64)
}

fn check_cusp(cusp: &Cusp) -> Result<()> {
    if cusp.n == 0 || cusp.n % cusp.b != 0 || gcd(cusp.a, cusp.n) != 1 {
        return Err(Error::Precondition(format!("invalid cusp {cusp:?}")));
    }
    Ok(())
}

/// φ_𝔠(n, t) for general n: zero unless n = (b′/(b, N/b))·m, in which case
///
///   π^{1/2+it}/Γ(1/2+it)·n^{−1/2+it}·(b,N/b)^{1/2+it}/(Nb)^{1/2+it}·b′/(b,N/b)
///   ·S(m/(m,B), 0; b0)·Σ_{d|m, (d,N/b)=1} d^{−2it}
///   ·(1/φ(B/(m,B)))·Σ_{χ mod B/(m,B)} χ(−(m/(m,B))·(b0d²)⁻¹·a)τ(χ̄)/L(1+2it, χ̄²χ₀)
///
/// with B = (b, N/b).
pub fn phi_cusp_general(cusp: &Cusp, n: u64, t: f64) -> Result<Complex64> {
    check_cusp(cusp)?;
    if n == 0 {
        return Err(Error::Domain("coefficient index must be positive".into()));
    }
    let big_b = cusp.width_gcd();
    let ratio = cusp.b_prime / big_b;
    if n % ratio != 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let m = n / ratio;
    let rest = cusp.n / cusp.b;
    let g = gcd(m, big_b);
    let c = big_b / g;
    let s_half = Complex64::new(0.5, t);
    let pref = gamma_factor(t)?
        * cpow(n as f64, Complex64::new(-0.5, t))
        * cpow(big_b as f64, s_half)
        / cpow((cusp.n * cusp.b) as f64, s_half)
        * ratio as f64
        * arith::ramanujan_sum((m / g) as i64, cusp.b0);
    if pref == Complex64::new(0.0, 0.0) {
        return Ok(pref);
    }
    let weights = character_weights(c, rest, t)?;
    let mut acc = CompensatedComplex::new();
    for d in arith::divisors(m) {
        if gcd(d, rest) != 1 {
            continue;
        }
        let x = character_argument(m / g, cusp.b0, d, cusp.a, c);
        acc.add(cpow(d as f64, Complex64::new(0.0, -2.0 * t)) * character_average(&weights, x));
    }
    Ok(pref * acc.value())
}

/// φ_𝔠(p, t) for a prime p ∤ N by the two-term closed form (zero unless
/// b′ = (b, N/b)).
pub fn phi_cusp_prime(cusp: &Cusp, p: u64, t: f64) -> Result<Complex64> {
    check_cusp(cusp)?;
    if !arith::is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if cusp.n % p == 0 {
        return Err(Error::Precondition(format!("p = {p} divides the level {}", cusp.n)));
    }
    if !cusp.is_balanced() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let bp = cusp.b_prime;
    let rest = cusp.n / cusp.b;
    let mu = mobius(cusp.b0) as f64;
    if mu == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s_half = Complex64::new(0.5, t);
    let common = gamma_factor(t)? * mu / cpow((cusp.n * cusp.b0) as f64, s_half);
    let weights = character_weights(bp, rest, t)?;
    // χ(−p̄·b̄0·a) and χ(−p·b̄0·a).
    let b0_inv = inv(cusp.b0 % bp, bp);
    let p_inv = inv(p % bp, bp);
    let a = (cusp.a % bp) as i64;
    let m = bp as i64;
    let first = cpow(p as f64, Complex64::new(-0.5, -t)) * character_average(&weights, -(p_inv * b0_inv % m) * a);
    let second = cpow(p as f64, Complex64::new(-0.5, t))
        * character_average(&weights, -((p as i64 % m) * b0_inv % m) * a);
    Ok(common * (first + second))
}

/// φ_𝔠(e², t) by the divisor/character closed form (zero unless
/// b′ = (b, N/b)).
pub fn phi_cusp_square(cusp: &Cusp, e: u64, t: f64) -> Result<Complex64> {
    check_cusp(cusp)?;
    if e == 0 {
        return Err(Error::Domain("e must be positive".into()));
    }
    if !cusp.is_balanced() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let bp = cusp.b_prime;
    let rest = cusp.n / cusp.b;
    let e2 = e * e;
    let g = gcd(e2, bp);
    let c = bp / g;
    let ram = arith::ramanujan_sum((e2 / g) as i64, cusp.b0);
    if ram == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s_half = Complex64::new(0.5, t);
    let pref = gamma_factor(t)? * cpow(e as f64, Complex64::new(-1.0, 2.0 * t)) / cpow((cusp.n * cusp.b0) as f64, s_half) * ram;
    let weights = character_weights(c, rest, t)?;
    let mut acc = CompensatedComplex::new();
    for d in arith::divisors(e2) {
        if gcd(d, rest) != 1 {
            continue;
        }
        let x = character_argument(e2 / g, cusp.b0, d, cusp.a, c);
        acc.add(cpow(d as f64, Complex64::new(0.0, -2.0 * t)) * character_average(&weights, x));
    }
    Ok(pref * acc.value())
}

// ---- bound verification -------------------------------------------------------

/// Which coefficient bound a grid point tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CoefficientCase {
    /// φ_𝔠(p, t) with p | N, against b′(p,b0)/(|Γ(1/2+it)|(pNb)^{1/2})·(N(1+|t|))^ε.
    PrimeDividingLevel,
    /// φ_𝔠(e², t), against b′e^{1+ε}/(|Γ(1/2+it)|(Nb)^{1/2})·(N(1+|t|))^ε.
    Square,
}

/// Envelope of a case.
pub fn coefficient_envelope(case: CoefficientCase, cusp: &Cusp, index: u64, t: f64) -> f64 {
    let n = cusp.n as f64;
    let b = cusp.b as f64;
    let growth = (n * (1.0 + t.abs())).powf(BOUND_EPSILON) / specfun::abs_gamma_half_line(t);
    match case {
        CoefficientCase::PrimeDividingLevel => {
            let p = index as f64;
            cusp.b_prime as f64 * gcd(index, cusp.b0) as f64 / (p * n * b).sqrt() * growth
        }
        CoefficientCase::Square => {
            let e = index as f64;
            cusp.b_prime as f64 * e.powf(1.0 + BOUND_EPSILON) / (n * b).sqrt() * growth
        }
    }
}

/// Sample grids for [`verify_coefficient_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientGrid {
    pub levels: Vec<u64>,
    pub ts: Vec<f64>,
    pub es: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientCaseReport {
    pub case: CoefficientCase,
    pub points: usize,
    /// Points at which the coefficient vanishes identically (divisibility
    /// condition of the general formula fails).
    pub vanishing: usize,
    pub max_ratio: f64,
    /// (N, b, a, index, t) of the maximum.
    pub argmax: (u64, u64, u64, u64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub cases: Vec<CoefficientCaseReport>,
}

impl CoefficientReport {
    pub fn case(&self, case: CoefficientCase) -> Option<&CoefficientCaseReport> {
        self.cases.iter().find(|c| c.case == case)
    }

    /// The fitted constants of `other` exceed these by at most `factor`.
    pub fn stable_against(&self, other: &CoefficientReport, factor: f64) -> bool {
        self.cases.iter().all(|c| {
            other.case(c.case).is_some_and(|o| {
                c.max_ratio.is_finite() && o.max_ratio.is_finite() && o.max_ratio <= factor * c.max_ratio
            })
        })
    }
}

/// Ratios |φ_𝔠| / envelope over every cusp of every level in the grid:
/// primes p | N through the general formula, and squares e².
pub fn verify_coefficient_bounds(grid: &CoefficientGrid) -> Result<CoefficientReport> {
    let mut points: Vec<(CoefficientCase, Cusp, u64, f64)> = Vec::new();
    for &n in &grid.levels {
        for cusp in cusps(n)? {
            for &t in &grid.ts {
                for p in arith::prime_divisors(n) {
                    points.push((CoefficientCase::PrimeDividingLevel, cusp, p, t));
                }
                for &e in &grid.es {
                    points.push((CoefficientCase::Square, cusp, e, t));
                }
            }
        }
    }
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|&(case, cusp, idx, t)| {
            let v = match case {
                CoefficientCase::PrimeDividingLevel => phi_cusp_general(&cusp, idx, t)?,
                CoefficientCase::Square => phi_cusp_general(&cusp, idx * idx, t)?,
            };
            Ok(v.norm())
        })
        .collect();
    let mut cases: Vec<CoefficientCaseReport> = Vec::new();
    for (&(case, cusp, idx, t), v) in points.iter().zip(values) {
        let v = v?;
        let entry = match cases.iter_mut().position(|c| c.case == case) {
            Some(i) => &mut cases[i],
            None => {
                cases.push(CoefficientCaseReport {
                    case,
                    points: 0,
                    vanishing: 0,
                    max_ratio: 0.0,
                    argmax: (cusp.n, cusp.b, cusp.a, idx, t),
                });
                cases.last_mut().expect("just pushed")
            }
        };
        entry.points += 1;
        if v == 0.0 {
            entry.vanishing += 1;
            continue;
        }
        let ratio = v / coefficient_envelope(case, &cusp, idx, t);
        if ratio > entry.max_ratio {
            entry.max_ratio = ratio;
            entry.argmax = (cusp.n, cusp.b, cusp.a, idx, t);
        }
    }
    Ok(CoefficientReport { cases })
}
