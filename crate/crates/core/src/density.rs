//! The statistic layer: explicit-formula prime sums over the newform family,
//! the smoothed one-level density, the orthogonal random-matrix prediction,
//! the prime sum Σ₁ (directly and through the sieve expansion) and smoothed
//! prime sums against characters.
//!
//! Every family average is geometric: it is a finite combination of Δ*
//! values, obtained from the Hecke relations
//!
//! ```text
//! c_f(p)  = λ_f(p),
//! c_f(p²) = λ_f(p²) − χ₀(p),
//! c_f(p^ν) = λ_f(p^ν) − λ_f(p^{ν−2})   (ν ≥ 3, using α_f(p)β_f(p) = 1).
//! ```

use crate::arith::{self, gcd, DirichletCharacter};
use crate::error::{Error, Result};
use crate::petersson::{
    self, deligne_e_remainder, plan_star_batch, FamilyParams, StarBreakdown,
    StarPlan, StarRequest, TruncationPolicy,
};
use crate::sum::{Compensated, CompensatedComplex};
use crate::testfn::{mellin_numeric, DyadicWindow, TestFunctionPair, WeightFunction};
use num_complex::Complex64;
use parking_lot::Mutex;
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;
use std::time::Instant;

/// Default bound on the largest prime power entering the prime sums.
pub const DEFAULT_PRIME_BUDGET: u64 = 1 << 16;

/// Sentinel for an absent cap in [`sigma1_expanded`].
pub const UNCAPPED: u64 = u64::MAX;

/// Which prime-power coefficient c_f(p^ν) is being averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoefficientMode {
    /// c_f(p) = λ_f(p).
    CfPrime,
    /// c_f(p²) = λ_f(p²) − χ₀(p).
    CfPrimeSquare,
    /// c_f(p^ν) for ν ≥ 3.
    CfPower(u32),
}

impl CoefficientMode {
    pub fn for_exponent(nu: u32) -> Result<Self> {
        match nu {
            0 => Err(Error::Domain("prime-power exponent must be positive".into())),
            1 => Ok(Self::CfPrime),
            2 => Ok(Self::CfPrimeSquare),
            nu => Ok(Self::CfPower(nu)),
        }
    }

    pub fn exponent(&self) -> u32 {
        match self {
            Self::CfPrime => 1,
            Self::CfPrimeSquare => 2,
            Self::CfPower(nu) => *nu,
        }
    }
}

/// c_f(p^ν) as Σ coeff·λ_f(p^j), for p not dividing the level:
/// a list of (coefficient, j).
pub fn hecke_combination(mode: CoefficientMode) -> Result<Vec<(f64, u32)>> {
    match mode {
        CoefficientMode::CfPrime => Ok(vec![(1.0, 1)]),
        CoefficientMode::CfPrimeSquare => Ok(vec![(1.0, 2), (-1.0, 0)]),
        CoefficientMode::CfPower(nu) if nu >= 3 => Ok(vec![(1.0, nu), (-1.0, nu - 2)]),
        CoefficientMode::CfPower(nu) => Err(Error::Domain(format!(
            "power mode needs ν ≥ 3, got {nu}"
        ))),
    }
}

/// One addend coeff·Δ*_q(m, 1) of a reduced family average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarTerm {
    pub coeff: f64,
    pub request: StarRequest,
}

/// Family average of c_f(p^ν) at level q as a combination of Δ*-queries.
pub fn cf_reduce(mode: CoefficientMode, p: u64, q: u64) -> Result<Vec<StarTerm>> {
    if !arith::is_prime(p) {
        return Err(Error::Domain(format!("{p} is not prime")));
    }
    if q == 0 {
        return Err(Error::Domain("level must be positive".into()));
    }
    if q % p == 0 {
        return Err(Error::Unsupported(format!(
            "p = {p} divides q = {q}; such primes are handled through the ledger"
        )));
    }
    hecke_combination(mode)?
        .into_iter()
        .map(|(coeff, j)| {
            let m = p
                .checked_pow(j)
                .ok_or_else(|| Error::Domain(format!("{p}^{j} overflows")))?;
            Ok(StarTerm {
                coeff,
                request: StarRequest { q, m, n: 1 },
            })
        })
        .collect()
}

/// The random-matrix prediction Φ̂(0) + Φ(0)/2 for orthogonal symmetry.
pub fn rmt_prediction(phi: &TestFunctionPair) -> f64 {
    phi.phi_hat(0.0) + 0.5 * phi.phi_zero()
}

// ---------------------------------------------------------------------------
// Δ* evaluation with a shared cache
// ---------------------------------------------------------------------------

type StarKey = (u32, [u64; 5], StarRequest);

fn star_cache() -> &'static Mutex<HashMap<StarKey, StarBreakdown>> {
    static CACHE: OnceLock<Mutex<HashMap<StarKey, StarBreakdown>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn policy_key(policy: &TruncationPolicy) -> [u64; 5] {
    [
        policy.eps.to_bits(),
        policy.modulus_cap,
        policy.e_cap,
        policy.c_cap,
        policy.strict as u64,
    ]
}

/// Δ* values for a set of requests, deduplicated, cached, and evaluated in
/// one batch. The cache is keyed by the full truncation policy, so a cached
/// value is exactly what a fresh evaluation would plan.
pub fn star_values(
    k: u32,
    requests: &HashSet<StarRequest>,
    policy: &TruncationPolicy,
) -> Result<HashMap<StarRequest, StarBreakdown>> {
    let pk = policy_key(policy);
    let mut out = HashMap::with_capacity(requests.len());
    let mut missing: Vec<StarRequest> = Vec::new();
    {
        let cache = star_cache().lock();
        for r in requests {
            match cache.get(&(k, pk, *r)) {
                Some(v) => {
                    out.insert(*r, v.clone());
                }
                None => missing.push(*r),
            }
        }
    }
    missing.sort_by_key(|r| (r.q, r.m, r.n));
    if !missing.is_empty() {
        let values = petersson::delta_star_batch(k, &missing, policy)?;
        let mut cache = star_cache().lock();
        for (r, v) in missing.into_iter().zip(values) {
            cache.insert((k, pk, r), v.clone());
            out.insert(r, v);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Explicit-formula prime sum
// ---------------------------------------------------------------------------

/// Family average of the explicit-formula prime sum at one level, with its
/// truncation ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimeSum {
    /// (1/log q)·Σ_{n < q^σ} Λ(n)⟨c_f(n)⟩n^{−1/2}Φ̂(log n/log q).
    pub value: f64,
    /// Δ*-truncation contribution plus the ledger of omitted terms.
    pub tail_bound: f64,
    /// The ν = 1 part over p ∤ q (the level's contribution to Σ₁).
    pub prime_part: f64,
    /// The ν = 2 part.
    pub square_part: f64,
    /// The ν ≥ 3 part and its a-priori bound from |c_f(p^ν)| ≤ 2.
    pub higher_part: f64,
    pub higher_bound: f64,
    /// Bound on the omitted odd powers of primes p ‖ q (|λ_f(p)|² = 1/p).
    pub ramified_ledger: f64,
    /// Largest prime power entering the sum (0 if none).
    pub prime_cutoff: u64,
}

/// Prime powers n = p^ν with 2 ≤ n < q^σ, as (p, ν).
fn prime_powers_below(q: u64, sigma: f64) -> Vec<(u64, u32)> {
    let bound = (q as f64).powf(sigma);
    if bound <= 2.0 {
        return Vec::new();
    }
    let limit = bound.ceil() as u64;
    let mut out = Vec::new();
    for p in arith::primes_up_to(limit) {
        let mut pv = p;
        let mut nu = 1;
        while (pv as f64) < bound {
            out.push((p, nu));
            match pv.checked_mul(p) {
                Some(next) => pv = next,
                None => break,
            }
            nu += 1;
        }
    }
    out
}

/// Δ*-requests needed by the prime sum at level q (including Δ*_q(1,1)).
pub fn prime_sum_requests(q: u64, sigma: f64) -> Result<Vec<StarRequest>> {
    let mut reqs = vec![StarRequest { q, m: 1, n: 1 }];
    for (p, nu) in prime_powers_below(q, sigma) {
        if q % p == 0 {
            continue;
        }
        for t in cf_reduce(CoefficientMode::for_exponent(nu)?, p, q)? {
            reqs.push(t.request);
        }
    }
    Ok(reqs)
}

fn assemble_prime_sum(
    q: u64,
    phi: &TestFunctionPair,
    stars: &HashMap<StarRequest, StarBreakdown>,
) -> Result<PrimeSum> {
    let log_q = (q as f64).ln();
    let norm_req = StarRequest { q, m: 1, n: 1 };
    let norm = &stars[&norm_req].result;
    let norm_upper = norm.value.abs() + norm.tail_bound;
    let mut parts = [Compensated::new(), Compensated::new(), Compensated::new()];
    let mut tail = Compensated::new();
    let mut higher_bound = Compensated::new();
    let mut ramified = Compensated::new();
    let mut cutoff = 0u64;
    for (p, nu) in prime_powers_below(q, phi.sigma) {
        let pf = p as f64;
        let n = p.pow(nu);
        cutoff = cutoff.max(n);
        let w = pf.ln() * (n as f64).powf(-0.5) * phi.phi_hat(nu as f64 * pf.ln() / log_q) / log_q;
        if w == 0.0 {
            continue;
        }
        let slot = (nu.min(3) - 1) as usize;
        if nu >= 3 {
            higher_bound.add(2.0 * w.abs() * norm_upper);
        }
        if q % p == 0 {
            if q % (p * p) == 0 {
                // λ_f(p) = 0: every c_f(p^ν) vanishes.
                continue;
            }
            // p ‖ q: c_f(p^ν) = λ_f(p)^ν with λ_f(p)² = 1/p.
            let mag = pf.powf(-(nu as f64) / 2.0);
            if nu % 2 == 0 {
                parts[slot].add(w * mag * norm.value);
                tail.add(w.abs() * mag * norm.tail_bound);
            } else {
                ramified.add(w.abs() * mag * norm_upper);
            }
            continue;
        }
        for t in cf_reduce(CoefficientMode::for_exponent(nu)?, p, q)? {
            let r = &stars[&t.request].result;
            parts[slot].add(w * t.coeff * r.value);
            tail.add((w * t.coeff).abs() * r.tail_bound);
        }
    }
    let prime_part = parts[0].value();
    let square_part = parts[1].value();
    let higher_part = parts[2].value();
    Ok(PrimeSum {
        value: prime_part + square_part + higher_part,
        tail_bound: tail.value() + ramified.value(),
        prime_part,
        square_part,
        higher_part,
        higher_bound: higher_bound.value(),
        ramified_ledger: ramified.value(),
        prime_cutoff: cutoff,
    })
}

/// The family-averaged explicit-formula prime sum at level q.
pub fn explicit_formula_sum(
    q: u64,
    k: u32,
    phi: &TestFunctionPair,
    policy: &TruncationPolicy,
) -> Result<PrimeSum> {
    if q < 2 {
        return Err(Error::Domain(format!(
            "the prime sum is normalised by log q; level {q} is not allowed"
        )));
    }
    FamilyParams::new(k, q)?;
    let reqs: HashSet<StarRequest> = prime_sum_requests(q, phi.sigma)?.into_iter().collect();
    let stars = star_values(k, &reqs, policy)?;
    assemble_prime_sum(q, phi, &stars)
}

// ---------------------------------------------------------------------------
// Family statistics
// ---------------------------------------------------------------------------

/// A weighted family sum with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub tail_bound: f64,
}

/// Truncation and budget settings of a family computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyConfig {
    pub k: u32,
    pub policy: TruncationPolicy,
    /// Largest admissible prime power (the prime-sum cutoff).
    pub prime_budget: u64,
}

impl FamilyConfig {
    pub fn new(k: u32, policy: TruncationPolicy) -> Self {
        Self {
            k,
            policy,
            prime_budget: DEFAULT_PRIME_BUDGET,
        }
    }
}

fn level_grid(big_q: u64, psi: &WeightFunction) -> Vec<(u64, f64)> {
    psi.level_range(big_q as f64)
        .map(|q| (q, psi.psi(q as f64 / big_q as f64)))
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

fn check_big_q(big_q: u64) -> Result<()> {
    if big_q < 4 {
        return Err(Error::Domain(format!("Q must be at least 4, got {big_q}")));
    }
    Ok(())
}

/// N(Q) = Σ_q Ψ(q/Q)·Δ*_q(1,1).
pub fn n_of_q(big_q: u64, k: u32, psi: &WeightFunction, policy: &TruncationPolicy) -> Result<Bounded> {
    check_big_q(big_q)?;
    let grid = level_grid(big_q, psi);
    let reqs: HashSet<StarRequest> = grid.iter().map(|&(q, _)| StarRequest { q, m: 1, n: 1 }).collect();
    let stars = star_values(k, &reqs, policy)?;
    Ok(weighted_norm(&grid, &stars))
}

fn weighted_norm(grid: &[(u64, f64)], stars: &HashMap<StarRequest, StarBreakdown>) -> Bounded {
    let mut v = Compensated::new();
    let mut t = Compensated::new();
    for &(q, w) in grid {
        let r = &stars[&StarRequest { q, m: 1, n: 1 }].result;
        v.add(w * r.value);
        t.add(w * r.tail_bound);
    }
    Bounded {
        value: v.value(),
        tail_bound: t.value(),
    }
}

/// Result of the one-level density experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub big_q: u64,
    pub k: u32,
    pub sigma: f64,
    pub phi_kind: &'static str,
    /// Levels q with their weights Ψ(q/Q).
    pub q_grid: Vec<(u64, f64)>,
    pub statistic: f64,
    pub prediction: f64,
    pub prime_cutoff: u64,
    pub tail_bound: f64,
    pub wall_time: f64,
    /// N(Q) and its bound.
    pub normaliser: Bounded,
    /// Normalised ν = 1, ν = 2 and ν ≥ 3 contributions (before the factor −2).
    pub prime_part: f64,
    pub square_part: f64,
    pub higher_part: f64,
}

impl DensityReport {
    pub fn abs_err(&self) -> f64 {
        (self.statistic - self.prediction).abs()
    }
}

fn prime_budget_guard(big_q: u64, psi: &WeightFunction, sigma: f64, budget: u64) -> Result<()> {
    let top = (psi.b * big_q as f64).powf(sigma).ceil();
    if top > budget as f64 {
        return Err(Error::Budget {
            required: top as u64,
            budget,
        });
    }
    Ok(())
}

/// (|x|+δx)/(N−δN) style bound for a quotient of bounded quantities.
fn quotient_bound(num: Bounded, den: Bounded) -> Result<Bounded> {
    if !(den.value > den.tail_bound) {
        return Err(Error::Accuracy {
            estimate: den.value,
            error: den.tail_bound,
        });
    }
    let value = num.value / den.value;
    let tail = (num.tail_bound + value.abs() * den.tail_bound) / (den.value - den.tail_bound);
    Ok(Bounded {
        value,
        tail_bound: tail,
    })
}

/// The smoothed one-level density
///
/// ```text
/// N(Q)^{−1} Σ_q Ψ(q/Q) [ Φ̂(0)·Δ*_q(1,1) − 2·P_q ],
/// ```
///
/// where P_q is the family-averaged explicit-formula prime sum (the factor 2
/// is c_f + c_f̄ for real coefficients).
pub fn one_level_density(
    big_q: u64,
    phi: &TestFunctionPair,
    psi: &WeightFunction,
    cfg: &FamilyConfig,
) -> Result<DensityReport> {
    let start = Instant::now();
    check_big_q(big_q)?;
    prime_budget_guard(big_q, psi, phi.sigma, cfg.prime_budget)?;
    let grid = level_grid(big_q, psi);
    let mut reqs = HashSet::new();
    for &(q, _) in &grid {
        FamilyParams::new(cfg.k, q)?;
        reqs.extend(prime_sum_requests(q, phi.sigma)?);
    }
    let stars = star_values(cfg.k, &reqs, &cfg.policy)?;
    let normaliser = weighted_norm(&grid, &stars);
    let phi_hat0 = phi.phi_hat(0.0);
    let mut num = Compensated::new();
    let mut num_tail = Compensated::new();
    let mut parts = [Compensated::new(), Compensated::new(), Compensated::new()];
    let mut cutoff = 0;
    for &(q, w) in &grid {
        let ps = assemble_prime_sum(q, phi, &stars)?;
        let norm = &stars[&StarRequest { q, m: 1, n: 1 }].result;
        num.add(w * (phi_hat0 * norm.value - 2.0 * ps.value));
        num_tail.add(w * (phi_hat0.abs() * norm.tail_bound + 2.0 * ps.tail_bound));
        parts[0].add(w * ps.prime_part);
        parts[1].add(w * ps.square_part);
        parts[2].add(w * ps.higher_part);
        cutoff = cutoff.max(ps.prime_cutoff);
    }
    let stat = quotient_bound(
        Bounded {
            value: num.value(),
            tail_bound: num_tail.value(),
        },
        normaliser,
    )?;
    Ok(DensityReport {
        big_q,
        k: cfg.k,
        sigma: phi.sigma,
        phi_kind: phi.kind.as_str(),
        q_grid: grid,
        statistic: stat.value,
        prediction: rmt_prediction(phi),
        prime_cutoff: cutoff.max(2),
        tail_bound: stat.tail_bound,
        wall_time: start.elapsed().as_secs_f64(),
        normaliser,
        prime_part: parts[0].value() / normaliser.value,
        square_part: parts[1].value() / normaliser.value,
        higher_part: parts[2].value() / normaliser.value,
    })
}

// ---------------------------------------------------------------------------
// Σ₁
// ---------------------------------------------------------------------------

/// (log p)p^{−1/2}Φ̂(log p/log q)/log q.
fn prime_weight(p: u64, q: u64, phi: &TestFunctionPair) -> f64 {
    let lp = (p as f64).ln();
    let lq = (q as f64).ln();
    lp / (p as f64).sqrt() * phi.phi_hat(lp / lq) / lq
}

/// Primes p ∤ q with p < q^σ.
fn unramified_primes(q: u64, sigma: f64) -> Vec<u64> {
    prime_powers_below(q, sigma)
        .into_iter()
        .filter(|&(p, nu)| nu == 1 && q % p != 0)
        .map(|(p, _)| p)
        .collect()
}

/// Σ₁ = N(Q)^{−1} Σ_q Ψ(q/Q)(log q)^{−1} Σ_{p∤q, p<q^σ} (log p)p^{−1/2}Φ̂(log p/log q)·Δ*_q(p,1).
pub fn sigma1_direct(
    big_q: u64,
    phi: &TestFunctionPair,
    psi: &WeightFunction,
    cfg: &FamilyConfig,
) -> Result<Bounded> {
    check_big_q(big_q)?;
    prime_budget_guard(big_q, psi, phi.sigma, cfg.prime_budget)?;
    let grid = level_grid(big_q, psi);
    let mut reqs = HashSet::new();
    for &(q, _) in &grid {
        FamilyParams::new(cfg.k, q)?;
        reqs.insert(StarRequest { q, m: 1, n: 1 });
        for p in unramified_primes(q, phi.sigma) {
            reqs.insert(StarRequest { q, m: p, n: 1 });
        }
    }
    let stars = star_values(cfg.k, &reqs, &cfg.policy)?;
    let normaliser = weighted_norm(&grid, &stars);
    let mut v = Compensated::new();
    let mut t = Compensated::new();
    for &(q, w) in &grid {
        for p in unramified_primes(q, phi.sigma) {
            let r = &stars[&StarRequest { q, m: p, n: 1 }].result;
            let pw = w * prime_weight(p, q, phi);
            v.add(pw * r.value);
            t.add(pw.abs() * r.tail_bound);
        }
    }
    quotient_bound(
        Bounded {
            value: v.value(),
            tail_bound: t.value(),
        },
        normaliser,
    )
}

/// Σ₁ through the sieve expansion, with its ledgers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma1Expansion {
    pub value: f64,
    /// Truncation bound shared with the direct route (c- and e-truncation).
    pub tail_bound: f64,
    /// Bound on the terms discarded by the L₁ and e caps.
    pub discarded_bound: f64,
    /// The same expansion over the primes p | q, reported separately and not
    /// included in `value`.
    pub ramified_fill_in: f64,
    /// Number of (L₁, L₂, m) triples visited.
    pub sieve_terms: u64,
}

/// The asymptotic-scale caps ⌊(log Q)⁶⌋ for L₁ and ⌊(log Q)³⌋ for e.
pub fn asymptotic_caps(big_q: u64) -> (u64, u64) {
    let l = (big_q as f64).ln();
    ((l.powi(6)).floor().max(1.0) as u64, (l.powi(3)).floor().max(1.0) as u64)
}

/// Σ₁ by expanding Δ* through the sieve and regrouping by the substitution
/// q = L₁²L₂m with d = L₁m, (L₂, L₁m) = 1 and L₁L₂ squarefree, where the
/// sieve weight becomes
///
/// ```text
/// μ(L₁L₂)/(L₁L₂) · Π_{p|L₁}(1 − p^{−2})^{−1} · Σ_{r|(L₁,m)} μ(r)/r² .
/// ```
///
/// The c- and e-truncations are those the direct route plans, so with both
/// caps set to [`UNCAPPED`] the two routes differ only by the regrouping.
/// Terms with L₁ > `l0_cap` or e ≥ `e_cap` are dropped and bounded in
/// `discarded_bound` through Deligne's bound.
pub fn sigma1_expanded(
    big_q: u64,
    phi: &TestFunctionPair,
    psi: &WeightFunction,
    cfg: &FamilyConfig,
    l0_cap: u64,
    e_cap: u64,
) -> Result<Sigma1Expansion> {
    if l0_cap == 0 || e_cap == 0 {
        return Err(Error::Domain("caps must be at least 1".into()));
    }
    check_big_q(big_q)?;
    prime_budget_guard(big_q, psi, phi.sigma, cfg.prime_budget)?;
    let k = cfg.k;
    let grid = level_grid(big_q, psi);
    let weights: HashMap<u64, f64> = grid.iter().copied().collect();
    let (q_lo, q_hi) = match (grid.first(), grid.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::Domain("Ψ(·/Q) vanishes at every integer level".into())),
    };
    let normaliser = n_of_q(big_q, k, psi, &cfg.policy)?;

    // Truncation plans of the direct route, per (q, p).
    let mut reqs = Vec::new();
    for &(q, _) in &grid {
        FamilyParams::new(k, q)?;
        for p in unramified_primes(q, phi.sigma) {
            reqs.push(StarRequest { q, m: p, n: 1 });
        }
        reqs.push(StarRequest { q, m: 1, n: 1 });
    }
    let plans = plan_star_batch(k, &reqs, &cfg.policy)?;
    let plan_of: HashMap<StarRequest, &StarPlan> = plans.iter().map(|p| (p.request, p)).collect();

    // Enumerate the substitution and collect the c-sums it needs.
    struct Item {
        weight: f64,
        query: usize,
        e: u64,
    }
    let mut queries: Vec<(u64, u64, u64, u64)> = Vec::new();
    let mut query_index: HashMap<(u64, u64, u64, u64), usize> = HashMap::new();
    let mut add_query = |key: (u64, u64, u64, u64)| -> usize {
        *query_index.entry(key).or_insert_with(|| {
            queries.push(key);
            queries.len() - 1
        })
    };
    let mut items: Vec<Item> = Vec::new();
    let mut fill_items: Vec<Item> = Vec::new();
    let mut tail = Compensated::new();
    let mut discarded = Compensated::new();
    let mut sieve_terms = 0u64;
    let squarefree_upto = |n: u64| (1..=n).filter(|&x| arith::mobius(x) != 0);
    for l1 in squarefree_upto(((q_hi as f64).sqrt()) as u64) {
        let l1_euler: f64 = arith::prime_divisors(l1)
            .into_iter()
            .map(|p| 1.0 / (1.0 - 1.0 / (p * p) as f64))
            .product();
        for l2 in squarefree_upto(q_hi / (l1 * l1)) {
            if gcd(l1, l2) != 1 {
                continue;
            }
            let base = l1 * l1 * l2;
            for m in (q_lo + base - 1) / base..=q_hi / base {
                if m == 0 || gcd(l2, m) != 1 {
                    continue;
                }
                let q = base * m;
                let Some(&psi_w) = weights.get(&q) else { continue };
                sieve_terms += 1;
                let d = l1 * m;
                let r_sum: f64 = arith::divisors(gcd(l1, m))
                    .into_iter()
                    .map(|r| arith::mobius(r) as f64 / (r * r) as f64)
                    .sum();
                let w = arith::mobius(l1 * l2) as f64 / (l1 * l2) as f64 * l1_euler * r_sum;
                let norm_plan = plan_of[&StarRequest { q, m: 1, n: 1 }];
                let norm_term = find_term(norm_plan, l1, l2)?;
                for p in unramified_primes(q, phi.sigma) {
                    let plan = plan_of[&StarRequest { q, m: p, n: 1 }];
                    let t = find_term(plan, l1, l2)?;
                    let pw = psi_w * prime_weight(p, q, phi);
                    let scale = (pw * w).abs() * arith::tau(p) as f64 * t.norm;
                    tail.add((pw * w).abs() * t.e_tail);
                    if l1 > l0_cap {
                        discarded.add(scale * petersson::deligne_e_remainder(l2, &[]));
                        continue;
                    }
                    let mut kept = Vec::new();
                    for pe in &t.es {
                        tail.add((pw * w).abs() * pe.c_tail / pe.e as f64);
                        if pe.e >= e_cap {
                            continue;
                        }
                        kept.push(pe.e);
                        let qi = add_query((d, p, pe.e * pe.e, pe.c_max));
                        items.push(Item {
                            weight: pw * w,
                            query: qi,
                            e: pe.e,
                        });
                    }
                    if kept.len() < t.es.len() {
                        let all: Vec<u64> = t.es.iter().map(|pe| pe.e).collect();
                        discarded.add(scale * (deligne_e_remainder(l2, &kept) - deligne_e_remainder(l2, &all)));
                    }
                }
                // Ramified fill-in: primes p | q, p < q^σ, with the e-set of Δ*_q(1,1).
                for (p, nu) in prime_powers_below(q, phi.sigma) {
                    if nu != 1 || q % p != 0 {
                        continue;
                    }
                    let pw = psi_w * prime_weight(p, q, phi);
                    for pe in &norm_term.es {
                        let (c_max, _) = petersson::c_cutoff(k, d, p, pe.e * pe.e, cfg.policy.eps * 1e-3);
                        if c_max.saturating_mul(d) > cfg.policy.modulus_cap.max(pe.c_max * d) {
                            break;
                        }
                        let qi = add_query((d, p, pe.e * pe.e, c_max));
                        fill_items.push(Item {
                            weight: pw * w,
                            query: qi,
                            e: pe.e,
                        });
                    }
                }
            }
        }
    }
    let sums = petersson::petersson_csums(k, &queries, cfg.policy.parallel)?;
    let mut value = Compensated::new();
    for it in &items {
        value.add(it.weight * sums[it.query] / it.e as f64);
    }
    let mut fill = Compensated::new();
    for it in &fill_items {
        fill.add(it.weight * sums[it.query] / it.e as f64);
    }
    let stat = quotient_bound(
        Bounded {
            value: value.value(),
            tail_bound: tail.value(),
        },
        normaliser,
    )?;
    Ok(Sigma1Expansion {
        value: stat.value,
        tail_bound: stat.tail_bound,
        discarded_bound: discarded.value() / (normaliser.value - normaliser.tail_bound),
        ramified_fill_in: fill.value() / normaliser.value,
        sieve_terms,
    })
}

fn find_term(plan: &StarPlan, l1: u64, l2: u64) -> Result<&petersson::PlannedTerm> {
    plan.terms
        .iter()
        .find(|t| t.term.l1 == l1 && t.term.l2 == l2)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "the substitution produced (L₁, L₂) = ({l1}, {l2}) absent from the sieve of q = {}",
                plan.request.q
            ))
        })
}

// ---------------------------------------------------------------------------
// Smoothed prime sums
// ---------------------------------------------------------------------------

/// Weights of a smoothed prime sum.
#[derive(Debug, Clone)]
pub enum PrimeWeights {
    Character(DirichletCharacter),
    Trivial,
}

/// Σ_{p∤N} w(p)(log p)V(p/P)e(vp/P)p^{−1/2−it}, with the Mellin main term in
/// trivial mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothedPrimeSum {
    pub sum: Complex64,
    /// P^{1/2−it}·Ṽ₁(1/2−it) with V₁(x) = V(x)e(vx) (trivial mode only).
    pub main_term: Option<Complex64>,
    /// sum − main_term (trivial mode only).
    pub residual: Option<Complex64>,
    pub primes: u64,
}

/// Smoothed prime sum over the dyadic window at scale P.
pub fn smoothed_prime_sum(
    weights: &PrimeWeights,
    t: f64,
    window: &DyadicWindow,
    big_p: f64,
    v: f64,
    coprime_to: u64,
) -> Result<SmoothedPrimeSum> {
    if !(big_p > 0.0) || !big_p.is_finite() {
        return Err(Error::Domain(format!("scale must be positive, got {big_p}")));
    }
    let (lo, hi) = window.support();
    let v1 = |x: f64| Complex64::from_polar(window.v(x), std::f64::consts::TAU * v * x);
    let mut acc = CompensatedComplex::new();
    let mut count = 0;
    let lo_n = (lo * big_p).floor().max(2.0) as u64;
    let hi_n = (hi * big_p).ceil() as u64;
    for p in arith::primes_up_to(hi_n) {
        if p < lo_n || (coprime_to > 1 && coprime_to % p == 0) {
            continue;
        }
        let w = match weights {
            PrimeWeights::Character(chi) => chi.evaluate(p as i64),
            PrimeWeights::Trivial => Complex64::new(1.0, 0.0),
        };
        let pf = p as f64;
        let term = w * pf.ln() * v1(pf / big_p) * Complex64::new(pf, 0.0).powc(Complex64::new(-0.5, -t));
        if term != Complex64::new(0.0, 0.0) {
            count += 1;
        }
        acc.add(term);
    }
    let sum = acc.value();
    let (main_term, residual) = match weights {
        PrimeWeights::Trivial => {
            let s = Complex64::new(0.5, -t);
            let mellin = mellin_numeric(v1, s, (lo, hi))?;
            let main = Complex64::new(big_p, 0.0).powc(s) * mellin;
            (Some(main), Some(sum - main))
        }
        PrimeWeights::Character(_) => (None, None),
    };
    Ok(SmoothedPrimeSum {
        sum,
        main_term,
        residual,
        primes: count,
    })
}
