//! Geometric side of the Petersson trace formula.
//!
//! `Δ_q(m,n)` is the harmonic average of λ_f(m)λ_f(n) over an orthogonal
//! basis of weight-k cusp forms on Γ₀(q); it is evaluated as
//!
//! ```text
//! Δ_q(m,n) = δ(m,n) + 2π i^{−k} Σ_{c≥1} S(m,n;cq)/(cq) · J_{k−1}(4π√(mn)/(cq))
//! ```
//!
//! and the newform average `Δ*_q(m,n)` is assembled from sub-level averages
//! by Ng's sieve over factorisations q = L₁L₂d:
//!
//! ```text
//! Δ*_q(m,n) = Σ μ(L₁L₂)/(L₁L₂) · Π_{p|L₁, p²∤d}(1 − p^{−2})^{−1} · Σ_{e|L₂^∞} Δ_d(m, ne²)/e .
//! ```
//!
//! All c-sums of a computation are collected into one batch and evaluated by
//! sweeping the moduli M = c·d in increasing order: for each M one FFT yields
//! S(a, 1; M) for every residue a, which serves every query with
//! gcd(m, M) = 1 or gcd(n, M) = 1 through S(m, n; M) = S(mn, 1; M).

use crate::arith::{self, factorize, gcd, mobius};
use crate::error::{Error, Result};
use crate::specfun;
use crate::sum::Compensated;
use num_complex::Complex64;
use parking_lot::{Mutex, RwLock};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Default truncation target.
pub const DEFAULT_EPS: f64 = 1e-8;
/// Hard cap on e in the Ng e-sum.
pub const E_HARD_CAP: u64 = 1 << 20;
/// Hard cap on the number of c-terms of any single c-sum.
pub const C_HARD_CAP: u64 = 10_000_000;
/// Default cap on the largest modulus M = c·d touched by an e > 1 query.
pub const DEFAULT_MODULUS_CAP: u64 = 1 << 17;

/// Largest admissible sweep work, in units of Σ_M M (≈ one complex
/// multiply-add each).
pub const SWEEP_WORK_BUDGET: u64 = 200_000_000_000;

/// Number of fixed modulus blocks of the sweep. It does not depend on the
/// thread count, so parallel and sequential sweeps are bitwise identical.
const SWEEP_BLOCKS: usize = 16;

/// Total planned FFT length after which a block renews its planner.
const PLANNER_RESET: u64 = 1 << 23;

/// Prime powers up to this size keep their table S(·, 1; p^a) for the life
/// of the process (at most ≈ 110 MB). Larger prime-power factors get
/// per-block transient tables.
const TABLE_CACHE_LIMIT: u64 = 1 << 14;

/// Total length of the transient tables a block keeps before clearing them.
const TRANSIENT_LIMIT: usize = 1 << 22;

/// Weight and level of a holomorphic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FamilyParams {
    pub k: u32,
    pub q: u64,
}

impl FamilyParams {
    /// Validates k even, k ≥ 4, q ≥ 1. Odd weights are rejected: with trivial
    /// nebentypus there are no cusp forms of odd weight.
    pub fn new(k: u32, q: u64) -> Result<Self> {
        if k % 2 == 1 {
            return Err(Error::Domain(format!("weight must be even, got {k}")));
        }
        if k < 4 {
            return Err(Error::Domain(format!("weight must be at least 4, got {k}")));
        }
        if q == 0 {
            return Err(Error::Domain("level must be positive".into()));
        }
        Ok(Self { k, q })
    }

    /// i^{−k} = (−1)^{k/2} for even k.
    pub fn i_pow_minus_k(&self) -> f64 {
        sign_i_minus_k(self.k)
    }
}

fn sign_i_minus_k(k: u32) -> f64 {
    if (k / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A truncated average with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaResult {
    pub value: f64,
    pub tail_bound: f64,
    pub c_terms: u64,
    pub e_terms: u64,
}

/// Split q = q₁q₂ where q₁ collects the primes dividing q to exponent ≥ 2.
pub fn decompose_q(q: u64) -> (u64, u64) {
    let mut q1 = 1;
    let mut q2 = 1;
    for (p, e) in factorize(q) {
        if e >= 2 {
            q1 *= p.pow(e);
        } else {
            q2 *= p;
        }
    }
    (q1, q2)
}

/// One factorisation q = L₁L₂d of the newform sieve with its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NgTerm {
    pub l1: u64,
    pub l2: u64,
    pub d: u64,
    /// μ(L₁L₂)/(L₁L₂) · Π_{p|L₁, p²∤d}(1 − p^{−2})^{−1}.
    pub weight: f64,
}

fn ng_weight(l1: u64, l2: u64, d: u64) -> f64 {
    let mut w = mobius(l1 * l2) as f64 / (l1 * l2) as f64;
    for (p, _) in factorize(l1) {
        if d % (p * p) != 0 {
            w /= 1.0 - 1.0 / (p * p) as f64;
        }
    }
    w
}

/// Sieve terms enumerated by L₁ | q₁ and L₂ | q₂ (squarefree L₁L₂).
pub fn ng_terms(q: u64) -> Vec<NgTerm> {
    let (q1, q2) = decompose_q(q);
    let mut out = Vec::new();
    for l1 in arith::divisors(arith::radical(q1)) {
        for l2 in arith::divisors(q2) {
            let d = q / (l1 * l2);
            out.push(NgTerm {
                l1,
                l2,
                d,
                weight: ng_weight(l1, l2, d),
            });
        }
    }
    out.sort_by_key(|t| (t.l1, t.l2));
    out
}

/// Sieve terms enumerated by the equivalent conditions L₁ | d and (L₂, d) = 1.
pub fn ng_terms_by_sublevel(q: u64) -> Vec<NgTerm> {
    let mut out = Vec::new();
    for l in arith::divisors(q) {
        if mobius(l) == 0 {
            continue;
        }
        let d = q / l;
        for l1 in arith::divisors(l) {
            let l2 = l / l1;
            if d % l1 == 0 && gcd(l2, d) == 1 {
                out.push(NgTerm {
                    l1,
                    l2,
                    d,
                    weight: ng_weight(l1, l2, d),
                });
            }
        }
    }
    out.sort_by_key(|t| (t.l1, t.l2));
    out
}

/// Truncation policy for Δ*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPolicy {
    /// Target for the total tail bound.
    pub eps: f64,
    /// Largest modulus c·d any e > 1 query may reach.
    pub modulus_cap: u64,
    /// Largest e in the e-sum.
    pub e_cap: u64,
    /// Largest number of c-terms in a single c-sum.
    pub c_cap: u64,
    /// Fail with `TruncationInfeasible` when `eps` is not reached; otherwise
    /// return the best value with its (larger) tail bound.
    pub strict: bool,
    /// Evaluate the modulus sweep on the rayon pool.
    pub parallel: bool,
}

impl TruncationPolicy {
    pub fn strict(eps: f64) -> Self {
        Self {
            eps,
            modulus_cap: DEFAULT_MODULUS_CAP,
            e_cap: E_HARD_CAP,
            c_cap: C_HARD_CAP,
            strict: true,
            parallel: false,
        }
    }

    pub fn budgeted(eps: f64, modulus_cap: u64) -> Self {
        Self {
            strict: false,
            modulus_cap,
            ..Self::strict(eps)
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::strict(DEFAULT_EPS)
    }
}

// ---------------------------------------------------------------------------
// c-sum truncation
// ---------------------------------------------------------------------------

/// Least C with certified tail below `eps_c`, together with that tail.
///
/// For c > C, |S(m,n;cd)| ≤ τ(cd)·gcd(m,n)^{1/2}·(cd)^{1/2} (Weil) with
/// τ(M) ≤ 2√M, and |J_ν(x)| ≤ (x/2)^ν/ν!. Summing c^{−ν} over c > C by the
/// integral gives
///
/// ```text
/// tail(C) = 2π · 2√g · (A/(2d))^ν / ν! · C^{1−ν}/(ν−1),  A = 4π√(mn).
/// ```
pub fn c_cutoff(k: u32, d: u64, m: u64, n: u64, eps_c: f64) -> (u64, f64) {
    let nu = (k - 1) as f64;
    let g = gcd(m, n) as f64;
    let a = 4.0 * PI * ((m as f64) * (n as f64)).sqrt();
    let ln_k = (4.0 * PI * g.sqrt()).ln() + nu * (a / (2.0 * d as f64)).ln()
        - ln_factorial(k - 1)
        - (nu - 1.0).ln();
    let tail = |c: u64| (ln_k + (1.0 - nu) * (c as f64).ln()).exp();
    let ln_c = (ln_k - eps_c.ln()) / (nu - 1.0);
    let mut c = if ln_c <= 0.0 {
        1
    } else if ln_c > 60.0 {
        u64::MAX / 4
    } else {
        ln_c.exp().ceil() as u64
    };
    c = c.max(1);
    // Guard against rounding at the boundary.
    while c < u64::MAX / 4 && tail(c) >= eps_c {
        c += 1;
    }
    (c, tail(c.min(u64::MAX / 4)))
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|j| (j as f64).ln()).sum()
}

// ---------------------------------------------------------------------------
// Batched c-sums
// ---------------------------------------------------------------------------

/// Result of Σ_{c ≤ C} S(m,n;cd)/(cd)·J_{k−1}(4π√(mn)/(cd)).
#[derive(Debug, Clone, Copy, PartialEq)]
struct CSum {
    sum: f64,
    abs_sum: f64,
}

#[derive(Debug, Clone, Copy)]
struct Query {
    d: u64,
    m: u64,
    n: u64,
    c_max: u64,
}

type CacheKey = (u32, u64, u64, u64, u64);

fn csum_cache() -> &'static Mutex<HashMap<CacheKey, CSum>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, CSum>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Batch of c-sums sharing the weight k. Results depend only on
/// (k, d, m, n, c_max), never on the rest of the batch.
struct Batch {
    k: u32,
    queries: Vec<Query>,
    index: HashMap<(u64, u64, u64, u64), usize>,
}

impl Batch {
    fn new(k: u32) -> Self {
        Self {
            k,
            queries: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn add(&mut self, d: u64, m: u64, n: u64, c_max: u64) -> usize {
        let key = (d, m, n, c_max);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.queries.len();
        self.queries.push(Query { d, m, n, c_max });
        self.index.insert(key, i);
        i
    }

    fn run(&self, parallel: bool) -> Result<Vec<CSum>> {
        let mut results: Vec<Option<CSum>> = vec![None; self.queries.len()];
        let mut todo = Vec::new();
        {
            let cache = csum_cache().lock();
            for (i, q) in self.queries.iter().enumerate() {
                match cache.get(&(self.k, q.d, q.m, q.n, q.c_max)) {
                    Some(v) => results[i] = Some(*v),
                    None => todo.push(i),
                }
            }
        }
        if !todo.is_empty() {
            let m_max = todo
                .iter()
                .map(|&i| self.queries[i].c_max.saturating_mul(self.queries[i].d))
                .max()
                .unwrap_or(0);
            let work = (m_max as u128 * m_max as u128 / 2).min(u64::MAX as u128) as u64;
            if work > SWEEP_WORK_BUDGET {
                return Err(Error::Budget {
                    required: work,
                    budget: SWEEP_WORK_BUDGET,
                });
            }
            let computed = sweep(self.k, &self.queries, &todo, parallel);
            let mut cache = csum_cache().lock();
            for (&i, v) in todo.iter().zip(computed) {
                let q = self.queries[i];
                cache.insert((self.k, q.d, q.m, q.n, q.c_max), v);
                results[i] = Some(v);
            }
        }
        Ok(results.into_iter().map(|r| r.expect("every query evaluated")).collect())
    }
}

/// Sweep all moduli M = c·d needed by `todo`, block by block.
fn sweep(k: u32, queries: &[Query], todo: &[usize], parallel: bool) -> Vec<CSum> {
    // Group queries by d, each group sorted by decreasing c_max.
    let mut by_d: HashMap<u64, Vec<usize>> = HashMap::new();
    for (slot, &i) in todo.iter().enumerate() {
        by_d.entry(queries[i].d).or_default().push(slot);
    }
    for v in by_d.values_mut() {
        v.sort_by_key(|&s| std::cmp::Reverse(queries[todo[s]].c_max));
    }
    let m_max = todo
        .iter()
        .map(|&i| queries[i].c_max * queries[i].d)
        .max()
        .unwrap_or(0);
    let d_max = by_d.keys().copied().max().unwrap_or(1);
    let tables = prime_power_tables(m_max, parallel);
    // Blocks of roughly equal Σ M.
    let mut bounds = vec![1u64];
    for b in 1..SWEEP_BLOCKS {
        let edge = ((m_max as f64) * (b as f64 / SWEEP_BLOCKS as f64).sqrt()).ceil() as u64;
        bounds.push(edge.max(*bounds.last().unwrap()));
    }
    bounds.push(m_max + 1);
    let ctx = SweepCtx {
        k,
        queries,
        todo,
        by_d: &by_d,
        d_max,
        tables: &tables,
    };
    let blocks: Vec<(u64, u64)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
    let partials: Vec<Vec<(usize, Compensated, Compensated)>> = if parallel {
        blocks.par_iter().map(|&(lo, hi)| ctx.block(lo, hi)).collect()
    } else {
        blocks.iter().map(|&(lo, hi)| ctx.block(lo, hi)).collect()
    };
    let mut acc = vec![(Compensated::new(), Compensated::new()); todo.len()];
    for block in &partials {
        for (slot, s, a) in block {
            acc[*slot].0.merge(s);
            acc[*slot].1.merge(a);
        }
    }
    acc.into_iter()
        .map(|(s, a)| CSum {
            sum: s.value(),
            abs_sum: a.value(),
        })
        .collect()
}

struct SweepCtx<'a> {
    k: u32,
    queries: &'a [Query],
    todo: &'a [usize],
    by_d: &'a HashMap<u64, Vec<usize>>,
    d_max: u64,
    tables: &'a [Option<Table>],
}

impl SweepCtx<'_> {
    fn block(&self, lo: u64, hi: u64) -> Vec<(usize, Compensated, Compensated)> {
        let mut planner = FftPlanner::<f64>::new();
        let mut planned: u64 = 0;
        let mut transient: HashMap<u64, Table> = HashMap::new();
        let mut transient_len = 0usize;
        let mut local: HashMap<usize, (Compensated, Compensated)> = HashMap::new();
        let mut hits: Vec<(usize, u64)> = Vec::new();
        let nu = self.k - 1;
        for big_m in lo..hi {
            hits.clear();
            for d in arith::divisors(big_m) {
                if d > self.d_max {
                    break;
                }
                let Some(group) = self.by_d.get(&d) else { continue };
                let c = big_m / d;
                for &slot in group {
                    if self.queries[self.todo[slot]].c_max < c {
                        break;
                    }
                    hits.push((slot, c));
                }
            }
            if hits.is_empty() {
                continue;
            }
            let mut parts = Vec::new();
            for (p, a) in factorize(big_m) {
                let f = p.pow(a);
                let table = match self.tables.get(f as usize).and_then(|t| t.clone()) {
                    Some(t) => t,
                    None => {
                        if let Some(t) = transient.get(&f) {
                            t.clone()
                        } else {
                            // The planner caches one plan per size; renew it
                            // periodically so it does not grow to O(Σ f).
                            planned += f;
                            if planned > PLANNER_RESET {
                                planner = FftPlanner::new();
                                planned = f;
                            }
                            if transient_len > TRANSIENT_LIMIT {
                                transient.clear();
                                transient_len = 0;
                            }
                            let t = Arc::new(kloosterman_table(f, &mut planner));
                            transient_len += t.len();
                            transient.insert(f, t.clone());
                            t
                        }
                    }
                };
                parts.push(CrtPart::new(p, f, big_m / f, table));
            }
            let mf = big_m as f64;
            for &(slot, _) in &hits {
                let q = self.queries[self.todo[slot]];
                let s = crt_kloosterman(&parts, q.m, q.n);
                if s == 0.0 {
                    continue;
                }
                let x = 4.0 * PI * ((q.m as f64) * (q.n as f64)).sqrt() / mf;
                let term = s / mf * specfun::j(nu, x);
                let e = local.entry(slot).or_default();
                e.0.add(term);
                e.1.add(term.abs());
            }
        }
        let mut out: Vec<(usize, Compensated, Compensated)> =
            local.into_iter().map(|(s, (a, b))| (s, a, b)).collect();
        out.sort_by_key(|t| t.0);
        out
    }
}

type Table = Arc<Vec<f64>>;

fn table_cache() -> &'static RwLock<HashMap<u64, Table>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, Table>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Shared tables for every prime power f ≤ min(limit, TABLE_CACHE_LIMIT),
/// indexed by f (`None` elsewhere). Missing tables are built first.
fn prime_power_tables(limit: u64, parallel: bool) -> Vec<Option<Table>> {
    let limit = limit.min(TABLE_CACHE_LIMIT);
    let mut powers = Vec::new();
    for p in arith::primes_up_to(limit) {
        let mut f = p;
        while f <= limit {
            powers.push(f);
            f *= p;
        }
    }
    let missing: Vec<u64> = {
        let cache = table_cache().read();
        powers.iter().copied().filter(|f| !cache.contains_key(f)).collect()
    };
    if !missing.is_empty() {
        let build = |chunk: &[u64]| {
            let mut planner = FftPlanner::new();
            chunk
                .iter()
                .map(|&f| (f, Arc::new(kloosterman_table(f, &mut planner))))
                .collect::<Vec<_>>()
        };
        let built: Vec<Vec<(u64, Table)>> = if parallel {
            missing.par_chunks(64).map(build).collect()
        } else {
            missing.chunks(64).map(build).collect()
        };
        let mut cache = table_cache().write();
        cache.extend(built.into_iter().flatten());
    }
    let cache = table_cache().read();
    let mut out = vec![None; limit as usize + 1];
    for f in powers {
        out[f as usize] = cache.get(&f).cloned();
    }
    out
}

/// One prime-power factor f = p^a of a modulus M = f·g, with ḡ = g⁻¹ mod f.
struct CrtPart {
    p: u64,
    f: u64,
    g_inv: u64,
    g_inv_sq: u64,
    table: Table,
}

impl CrtPart {
    fn new(p: u64, f: u64, g: u64, table: Table) -> Self {
        let g_inv = arith::inverse_mod((g % f) as i64, f).expect("coprime cofactor");
        Self {
            p,
            f,
            g_inv,
            g_inv_sq: mul_mod(g_inv, g_inv, f),
            table,
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// S(m, n; M) from the prime-power factors of M by twisted
/// multiplicativity: S(m, n; fg) = S(mḡ, nḡ; f)·S(m f̄, n f̄; g). Each local
/// factor is S(mnḡ², 1; f) when p ∤ m or p ∤ n, and a direct sum otherwise.
fn crt_kloosterman(parts: &[CrtPart], m: u64, n: u64) -> f64 {
    let mut s = 1.0;
    for part in parts {
        let f = part.f;
        let (mm, nn) = (m % f, n % f);
        let local = if mm % part.p != 0 || nn % part.p != 0 {
            part.table[mul_mod(mul_mod(mm, nn, f), part.g_inv_sq, f) as usize]
        } else {
            arith::kloosterman(
                mul_mod(mm, part.g_inv, f) as i64,
                mul_mod(nn, part.g_inv, f) as i64,
                f,
            )
        };
        s *= local;
    }
    s
}

/// S(a, 1; M) for every residue a, by one inverse FFT of
/// x ↦ e(x̄/M)·1_{(x,M)=1}.
fn kloosterman_table(big_m: u64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    if big_m == 1 {
        return vec![1.0];
    }
    let units = unit_residues(big_m);
    let inverses = batch_inverses(&units, big_m);
    let n = big_m as usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (&x, &xb) in units.iter().zip(&inverses) {
        buf[x as usize] = arith::unit_root(xb, big_m);
    }
    let fft = planner.plan_fft_inverse(n);
    fft.process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}


/// Residues in [1, M) coprime to M, increasing, by sieving out the prime
/// divisors of M.
fn unit_residues(big_m: u64) -> Vec<u64> {
    let mut is_unit = vec![true; big_m as usize];
    is_unit[0] = big_m == 1;
    for p in arith::prime_divisors(big_m) {
        for j in (0..big_m).step_by(p as usize) {
            is_unit[j as usize] = false;
        }
    }
    (1..big_m).filter(|&x| is_unit[x as usize]).collect()
}

/// Inverses of all `units` modulo M with a single extended Euclid call
/// (prefix products, then one backward pass).
fn batch_inverses(units: &[u64], big_m: u64) -> Vec<u64> {
    let mulmod = |a: u64, b: u64| -> u64 {
        if big_m < 1 << 32 {
            a * b % big_m
        } else {
            (a as u128 * b as u128 % big_m as u128) as u64
        }
    };
    let mut prefix = Vec::with_capacity(units.len());
    let mut acc = 1u64;
    for &x in units {
        acc = mulmod(acc, x);
        prefix.push(acc);
    }
    let mut inv = vec![0u64; units.len()];
    let Some(&last) = prefix.last() else { return inv };
    let mut running = arith::inverse_mod(last as i64, big_m).expect("product of units");
    for i in (0..units.len()).rev() {
        let before = if i == 0 { 1 } else { prefix[i - 1] };
        inv[i] = mulmod(running, before);
        running = mulmod(running, units[i]);
    }
    inv
}

/// 2π i^{−k} Σ_{c ≤ C} S(m,n;cd)/(cd)·J_{k−1}(4π√(mn)/(cd)) for each query
/// (d, m, n, C), i.e. Δ_d(m,n) − δ(m,n) truncated at C.
pub fn petersson_csums(k: u32, queries: &[(u64, u64, u64, u64)], parallel: bool) -> Result<Vec<f64>> {
    FamilyParams::new(k, 1)?;
    let mut batch = Batch::new(k);
    let idx: Vec<usize> = queries
        .iter()
        .map(|&(d, m, n, c)| {
            if d == 0 || m == 0 || n == 0 || c == 0 {
                return Err(Error::Domain(format!("invalid c-sum query {:?}", (d, m, n, c))));
            }
            Ok(batch.add(d, m, n, c))
        })
        .collect::<Result<_>>()?;
    let sums = batch.run(parallel)?;
    let pref = 2.0 * PI * sign_i_minus_k(k);
    Ok(idx.into_iter().map(|i| pref * sums[i].sum).collect())
}

/// Clear the process-wide c-sum cache (used by tests that measure timing).
pub fn clear_cache() {
    csum_cache().lock().clear();
}

// ---------------------------------------------------------------------------
// Δ_q
// ---------------------------------------------------------------------------

/// Δ_q(m, n) with certified c-truncation below `eps`.
pub fn delta_q(params: FamilyParams, m: u64, n: u64, eps: f64) -> Result<DeltaResult> {
    check_eps(eps)?;
    check_indices(m, n)?;
    let (c_max, tail) = c_cutoff(params.k, params.q, m, n, eps);
    if c_max > C_HARD_CAP {
        let (_, achievable) = c_cutoff_at(params.k, params.q, m, n, C_HARD_CAP);
        return Err(Error::TruncationInfeasible {
            requested: eps,
            achievable,
        });
    }
    let mut batch = Batch::new(params.k);
    batch.add(params.q, m, n, c_max);
    let r = batch.run(false)?[0];
    Ok(assemble_plain(params.k, m, n, r, c_max, tail))
}

fn c_cutoff_at(k: u32, d: u64, m: u64, n: u64, c: u64) -> (u64, f64) {
    // tail at a fixed C, from the same closed form
    let nu = (k - 1) as f64;
    let g = gcd(m, n) as f64;
    let a = 4.0 * PI * ((m as f64) * (n as f64)).sqrt();
    let ln_k = (4.0 * PI * g.sqrt()).ln() + nu * (a / (2.0 * d as f64)).ln()
        - ln_factorial(k - 1)
        - (nu - 1.0).ln();
    (c, (ln_k + (1.0 - nu) * (c as f64).ln()).exp())
}

fn assemble_plain(k: u32, m: u64, n: u64, r: CSum, c_max: u64, tail: f64) -> DeltaResult {
    let delta = if m == n { 1.0 } else { 0.0 };
    let pref = 2.0 * PI * sign_i_minus_k(k);
    DeltaResult {
        value: delta + pref * r.sum,
        tail_bound: tail + 2.0 * PI * r.abs_sum * 1e-14,
        c_terms: c_max,
        e_terms: 0,
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn check_indices(m: u64, n: u64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Domain("indices must be positive".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Δ*_q
// ---------------------------------------------------------------------------

/// A request for Δ*_q(m, n) inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct StarRequest {
    pub q: u64,
    pub m: u64,
    pub n: u64,
}

/// Detailed breakdown of a Δ* evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarBreakdown {
    pub result: DeltaResult,
    /// Part of the tail bound due to e-sums stopped by the caps.
    pub e_tail: f64,
    /// Part of the tail bound due to c-truncation and rounding.
    pub c_tail: f64,
    /// Largest e used.
    pub e_max: u64,
}

/// One evaluated e of a sieve term: its c-cutoff and certified c-tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlannedE {
    pub e: u64,
    pub c_max: u64,
    pub c_tail: f64,
}

/// Truncation plan of one sieve term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedTerm {
    pub term: NgTerm,
    /// Upper bound for Δ_d(1,1) (value plus tail).
    pub norm: f64,
    pub es: Vec<PlannedE>,
    /// Bound on Σ over the e not in `es` of |Δ_d(m, ne²)|/e.
    pub e_tail: f64,
}

/// Truncation plan of one Δ* request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarPlan {
    pub request: StarRequest,
    pub terms: Vec<PlannedTerm>,
}

/// L₂-smooth numbers up to `limit`, increasing.
pub fn smooth_numbers(l2: u64, limit: u64) -> Vec<u64> {
    let primes = arith::prime_divisors(l2);
    let mut out = vec![1u64];
    for p in primes {
        let len = out.len();
        for i in 0..len {
            let mut v = out[i];
            while let Some(next) = v.checked_mul(p) {
                if next > limit {
                    break;
                }
                out.push(next);
                v = next;
            }
        }
    }
    out.sort_unstable();
    out
}

/// Σ_{e | L^∞} τ(e²)/e = Π_{p|L} (1 + 1/p)/(1 − 1/p)².
fn deligne_e_mass(l2: u64) -> f64 {
    arith::prime_divisors(l2)
        .into_iter()
        .map(|p| {
            let x = 1.0 / p as f64;
            (1.0 + x) / ((1.0 - x) * (1.0 - x))
        })
        .product()
}

/// τ(e²) = Π (2a + 1).
fn tau_square(e: u64) -> u64 {
    factorize(e).into_iter().map(|(_, a)| 2 * a as u64 + 1).product()
}

/// Bound on Σ_{e ∈ L₂^∞, e ∉ used} τ(e²)/e.
pub fn deligne_e_remainder(l2: u64, used: &[u64]) -> f64 {
    let mut partial = Compensated::new();
    for &e in used {
        partial.add(tau_square(e) as f64 / e as f64);
    }
    (deligne_e_mass(l2) - partial.value()).max(0.0)
}

fn validate_requests(k: u32, requests: &[StarRequest], policy: &TruncationPolicy) -> Result<()> {
    check_eps(policy.eps)?;
    FamilyParams::new(k, 1)?;
    for r in requests {
        FamilyParams::new(k, r.q)?;
        check_indices(r.m, r.n)?;
        if gcd(r.m * r.n, r.q) != 1 {
            return Err(Error::Precondition(format!(
                "Δ* needs gcd(mn, q) = 1; got m={}, n={}, q={}",
                r.m, r.n, r.q
            )));
        }
    }
    Ok(())
}

/// Upper bounds for Δ_d(1,1) (value plus tail) at every level in `levels`.
pub fn level_norms(k: u32, levels: &BTreeSet<u64>, parallel: bool) -> Result<HashMap<u64, f64>> {
    let eps_n = 1e-12;
    let mut batch = Batch::new(k);
    let mut idx = Vec::new();
    for &d in levels {
        let (c, tail) = c_cutoff(k, d, 1, 1, eps_n);
        idx.push((d, batch.add(d, 1, 1, c), c, tail));
    }
    let res = batch.run(parallel)?;
    Ok(idx
        .into_iter()
        .map(|(d, i, c, tail)| {
            let r = assemble_plain(k, 1, 1, res[i], c, tail);
            (d, (r.value + r.tail_bound).max(0.0))
        })
        .collect())
}

/// Choose the c-cutoffs and the e-sets of many Δ* requests.
///
/// The e-sum of each sieve term runs over L₂-smooth e in increasing order
/// until the remaining mass, bounded by Deligne's bound
/// |Δ_d(m, ne²)| ≤ τ(m)τ(n)τ(e²)·Δ_d(1,1) (valid since (mne², d) = 1), is
/// below the per-term target, or until e would need a modulus beyond
/// `policy.modulus_cap`.
pub fn plan_star_batch(k: u32, requests: &[StarRequest], policy: &TruncationPolicy) -> Result<Vec<StarPlan>> {
    validate_requests(k, requests, policy)?;
    let mut level_terms: HashMap<u64, Vec<NgTerm>> = HashMap::new();
    let mut levels: BTreeSet<u64> = BTreeSet::new();
    for r in requests {
        let terms = level_terms.entry(r.q).or_insert_with(|| ng_terms(r.q));
        levels.extend(terms.iter().map(|t| t.d));
    }
    let norms = level_norms(k, &levels, policy.parallel)?;

    let mut plans = Vec::with_capacity(requests.len());
    for r in requests {
        let terms = &level_terms[&r.q];
        let e_terms_count = terms.iter().filter(|t| t.l2 > 1).count().max(1);
        let eps_c = 1e-3 * policy.eps / terms.len().max(1) as f64;
        let tau_mn = (arith::tau(r.m) * arith::tau(r.n)) as f64;
        let mut planned = Vec::with_capacity(terms.len());
        for t in terms {
            let norm = norms[&t.d];
            let mut es = Vec::new();
            let mut e_tail = 0.0;
            if t.l2 == 1 {
                let (c, tail) = c_cutoff(k, t.d, r.m, r.n, eps_c);
                if c > policy.c_cap {
                    let (_, achievable) = c_cutoff_at(k, t.d, r.m, r.n, policy.c_cap);
                    return Err(Error::TruncationInfeasible {
                        requested: policy.eps,
                        achievable,
                    });
                }
                es.push(PlannedE {
                    e: 1,
                    c_max: c,
                    c_tail: tail,
                });
            } else {
                let target = 0.5 * policy.eps / (e_terms_count as f64 * t.weight.abs());
                let scale = tau_mn * norm;
                let mass = deligne_e_mass(t.l2);
                let mut partial = Compensated::new();
                let mut remaining = scale * mass;
                for e in smooth_numbers(t.l2, policy.e_cap) {
                    if remaining < target {
                        break;
                    }
                    let Some(ne2) = r.n.checked_mul(e * e) else { break };
                    let (c, tail) = c_cutoff(k, t.d, r.m, ne2, eps_c);
                    if c > policy.c_cap || c.saturating_mul(t.d) > policy.modulus_cap {
                        break;
                    }
                    es.push(PlannedE {
                        e,
                        c_max: c,
                        c_tail: tail,
                    });
                    partial.add(tau_square(e) as f64 / e as f64);
                    remaining = scale * (mass - partial.value()).max(0.0);
                }
                e_tail = remaining;
            }
            planned.push(PlannedTerm {
                term: *t,
                norm,
                es,
                e_tail,
            });
        }
        plans.push(StarPlan {
            request: *r,
            terms: planned,
        });
    }
    Ok(plans)
}

/// Evaluate planned Δ* requests with one batched modulus sweep.
pub fn evaluate_star_plans(k: u32, plans: &[StarPlan], policy: &TruncationPolicy) -> Result<Vec<StarBreakdown>> {
    let mut batch = Batch::new(k);
    let mut index = Vec::with_capacity(plans.len());
    for plan in plans {
        let r = plan.request;
        let mut per_req = Vec::new();
        for t in &plan.terms {
            for pe in &t.es {
                per_req.push(batch.add(t.term.d, r.m, r.n * pe.e * pe.e, pe.c_max));
            }
        }
        index.push(per_req);
    }
    let sums = batch.run(policy.parallel)?;

    let mut out = Vec::with_capacity(plans.len());
    for (plan, qidx) in plans.iter().zip(&index) {
        let r = plan.request;
        let mut value = Compensated::new();
        let mut c_tail = Compensated::new();
        let mut e_tail = Compensated::new();
        let mut c_terms = 0u64;
        let mut e_terms = 0u64;
        let mut e_max = 1u64;
        let mut qi = qidx.iter();
        for t in &plan.terms {
            let w = t.term.weight;
            for pe in &t.es {
                let i = *qi.next().expect("one query per planned e");
                let part = assemble_plain(k, r.m, r.n * pe.e * pe.e, sums[i], pe.c_max, pe.c_tail);
                value.add(w * part.value / pe.e as f64);
                c_tail.add(w.abs() * part.tail_bound / pe.e as f64);
                c_terms += pe.c_max;
                e_terms += 1;
                e_max = e_max.max(pe.e);
            }
            e_tail.add(w.abs() * t.e_tail);
        }
        let tail = c_tail.value() + e_tail.value();
        if policy.strict && tail > policy.eps {
            return Err(Error::TruncationInfeasible {
                requested: policy.eps,
                achievable: tail,
            });
        }
        out.push(StarBreakdown {
            result: DeltaResult {
                value: value.value(),
                tail_bound: tail,
                c_terms,
                e_terms,
            },
            e_tail: e_tail.value(),
            c_tail: c_tail.value(),
            e_max,
        });
    }
    Ok(out)
}

/// Evaluate many Δ* values together (plan, then one batched sweep).
pub fn delta_star_batch(
    k: u32,
    requests: &[StarRequest],
    policy: &TruncationPolicy,
) -> Result<Vec<StarBreakdown>> {
    let plans = plan_star_batch(k, requests, policy)?;
    evaluate_star_plans(k, &plans, policy)
}

/// Δ*_q(m, n) under a truncation policy.
pub fn delta_q_star_with(
    params: FamilyParams,
    m: u64,
    n: u64,
    policy: &TruncationPolicy,
) -> Result<DeltaResult> {
    let req = StarRequest { q: params.q, m, n };
    Ok(delta_star_batch(params.k, &[req], policy)?[0].result)
}

/// Δ*_q(m, n) with certified total tail below `eps`; fails with
/// `TruncationInfeasible` (carrying the achievable bound) otherwise.
pub fn delta_q_star(params: FamilyParams, m: u64, n: u64, eps: f64) -> Result<DeltaResult> {
    delta_q_star_with(params, m, n, &TruncationPolicy::strict(eps))
}
