//! Elementary arithmetic: factorisation and multiplicative functions,
//! Kloosterman and Ramanujan sums, and Dirichlet characters.

use crate::sum::{Compensated, CompensatedComplex};
use num_complex::Complex64;
use num_integer::Integer;
use std::f64::consts::TAU;
use std::sync::Arc;

/// Greatest common divisor (gcd(0, 0) = 0).
#[inline]
pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Prime factorisation by trial division, primes in increasing order.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    assert!(n >= 1, "factorize requires n >= 1");
    let mut out = Vec::new();
    let mut push = |p: u64, n: &mut u64| {
        let mut e = 0;
        while *n % p == 0 {
            *n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut p = 5;
    while p * p <= n {
        push(p, &mut n);
        push(p + 2, &mut n);
        p += 6;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Distinct prime divisors of n.
pub fn prime_divisors(n: u64) -> Vec<u64> {
    factorize(n).into_iter().map(|(p, _)| p).collect()
}

/// All positive divisors of n in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    ds
}

/// Möbius function μ(n).
pub fn mobius(n: u64) -> i64 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Euler's totient φ(n).
pub fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .into_iter()
        .fold(1, |acc, (p, e)| acc * (p - 1) * p.pow(e - 1))
}

/// Number of divisors τ(n).
pub fn tau(n: u64) -> u64 {
    factorize(n).into_iter().map(|(_, e)| e as u64 + 1).product()
}

/// Product of the distinct primes dividing n.
pub fn radical(n: u64) -> u64 {
    prime_divisors(n).into_iter().product()
}

/// von Mangoldt function Λ(n): log p if n is a power of the prime p, else 0.
pub fn von_mangoldt(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let f = factorize(n);
    if f.len() == 1 {
        (f[0].0 as f64).ln()
    } else {
        0.0
    }
}

/// Primality by trial division.
pub fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n) == vec![(n, 1)]
}

/// Primes up to and including `limit` (sieve of Eratosthenes).
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Reduce a signed integer into [0, c).
#[inline]
pub fn modulo(a: i64, c: u64) -> u64 {
    (a as i128).rem_euclid(c as i128) as u64
}

/// Inverse of a modulo c, if gcd(a, c) = 1. By convention the inverse modulo 1 is 0.
pub fn inverse_mod(a: i64, c: u64) -> Option<u64> {
    assert!(c >= 1, "modulus must be positive");
    if c == 1 {
        return Some(0);
    }
    let a = modulo(a, c) as i128;
    let (mut r0, mut r1) = (c as i128, a);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return None;
    }
    Some(s0.rem_euclid(c as i128) as u64)
}

/// Modular exponentiation.
pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let m128 = m as u128;
    let mut b = (base % m) as u128;
    let mut r: u128 = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            r = r * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    r as u64
}

/// e(num/den) = exp(2πi·num/den) with the fraction reduced before the
/// trigonometric evaluation.
#[inline]
pub fn unit_root(num: u64, den: u64) -> Complex64 {
    let r = num % den;
    let theta = TAU * (r as f64) / (den as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// Kloosterman sum S(m, n; c) = Σ_{x mod c, (x,c)=1} e((m x + n x̄)/c) by direct
/// compensated summation. The sum is real; the imaginary residue is checked.
pub fn kloosterman(m: i64, n: i64, c: u64) -> f64 {
    assert!(c >= 1, "modulus must be positive");
    if c == 1 {
        return 1.0;
    }
    let mm = modulo(m, c) as u128;
    let nn = modulo(n, c) as u128;
    let c128 = c as u128;
    let mut re = Compensated::new();
    let mut im = Compensated::new();
    for x in 1..c {
        if gcd(x, c) != 1 {
            continue;
        }
        let xbar = inverse_mod(x as i64, c).expect("unit has an inverse") as u128;
        let r = ((mm * x as u128 + nn * xbar) % c128) as u64;
        let z = unit_root(r, c);
        re.add(z.re);
        im.add(z.im);
    }
    assert!(
        im.value().abs() < 1e-9 * (1.0 + c as f64).sqrt(),
        "Kloosterman sum S({m},{n};{c}) has imaginary residue {}",
        im.value()
    );
    re.value()
}

/// Ramanujan sum c_c(n) = S(n, 0; c).
pub fn ramanujan_sum(n: i64, c: u64) -> f64 {
    kloosterman(n, 0, c)
}

/// Weil bound τ(c)·gcd(m,n,c)^{1/2}·c^{1/2} for |S(m,n;c)|.
pub fn weil_bound(m: i64, n: i64, c: u64) -> f64 {
    let g = gcd(gcd(m.unsigned_abs(), n.unsigned_abs()), c);
    tau(c) as f64 * (g as f64).sqrt() * (c as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Dirichlet characters
// ---------------------------------------------------------------------------

/// One prime-power factor of (Z/cZ)^*, with its cyclic generators.
#[derive(Debug)]
struct GroupComponent {
    p: u64,
    a: u32,
    pa: u64,
    /// Generators as residues modulo p^a.
    gens: Vec<u64>,
    /// Orders of the generators.
    orders: Vec<u64>,
    /// Discrete logarithms of each residue modulo p^a (None for non-units).
    dlog: Vec<Option<[u64; 2]>>,
}

/// The group (Z/cZ)^* split by the Chinese remainder theorem.
#[derive(Debug)]
pub struct CharacterGroup {
    modulus: u64,
    comps: Vec<GroupComponent>,
    /// Exponent of the group (lcm of generator orders).
    exponent: u64,
}

fn primitive_root_odd(p: u64, a: u32) -> u64 {
    let pa = p.pow(a);
    let qs = prime_divisors(p - 1);
    let mut g = 2;
    loop {
        if qs.iter().all(|&r| pow_mod(g, (p - 1) / r, p) != 1) {
            break;
        }
        g += 1;
    }
    if a >= 2 && pow_mod(g, p - 1, p * p) == 1 {
        g += p;
    }
    g % pa
}

impl CharacterGroup {
    pub fn new(modulus: u64) -> Arc<Self> {
        assert!(modulus >= 1, "modulus must be positive");
        let mut comps = Vec::new();
        for (p, a) in factorize(modulus) {
            let pa = p.pow(a);
            let (gens, orders) = if p == 2 {
                match a {
                    1 => (vec![], vec![]),
                    2 => (vec![3], vec![2]),
                    _ => (vec![pa - 1, 5], vec![2, pa / 4]),
                }
            } else {
                (vec![primitive_root_odd(p, a)], vec![pa / p * (p - 1)])
            };
            let mut dlog = vec![None; pa as usize];
            match gens.len() {
                0 => dlog[1 % pa as usize] = Some([0, 0]),
                1 => {
                    let mut x = 1u64;
                    for i in 0..orders[0] {
                        dlog[x as usize] = Some([i, 0]);
                        x = x * gens[0] % pa;
                    }
                }
                _ => {
                    let mut s = 1u64;
                    for i in 0..orders[0] {
                        let mut x = s;
                        for j in 0..orders[1] {
                            dlog[x as usize] = Some([i, j]);
                            x = x * gens[1] % pa;
                        }
                        s = s * gens[0] % pa;
                    }
                }
            }
            comps.push(GroupComponent {
                p,
                a,
                pa,
                gens,
                orders,
                dlog,
            });
        }
        let exponent = comps
            .iter()
            .flat_map(|c| c.orders.iter().copied())
            .fold(1u64, |acc, o| acc.lcm(&o));
        Arc::new(Self {
            modulus,
            comps,
            exponent,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Order of the group, φ(c).
    pub fn order(&self) -> u64 {
        self.comps
            .iter()
            .flat_map(|c| c.orders.iter().copied())
            .product()
    }

    /// All characters of the group, in lexicographic order of exponents.
    pub fn characters(self: &Arc<Self>) -> Vec<DirichletCharacter> {
        let orders: Vec<u64> = self
            .comps
            .iter()
            .flat_map(|c| c.orders.iter().copied())
            .collect();
        let total: u64 = orders.iter().product();
        let mut out = Vec::with_capacity(total as usize);
        for idx in 0..total {
            let mut rem = idx;
            let mut flat = vec![0u64; orders.len()];
            for (slot, &o) in flat.iter_mut().zip(&orders).rev() {
                *slot = rem % o;
                rem /= o;
            }
            out.push(self.character_from_flat(&flat));
        }
        out
    }

    fn character_from_flat(self: &Arc<Self>, flat: &[u64]) -> DirichletCharacter {
        let mut exps = Vec::with_capacity(self.comps.len());
        let mut it = flat.iter();
        for c in &self.comps {
            exps.push(c.orders.iter().map(|_| *it.next().unwrap()).collect());
        }
        DirichletCharacter {
            group: Arc::clone(self),
            exps,
        }
    }

    /// CRT lift of a residue h modulo the component p^a to an integer
    /// that is 1 modulo every other component.
    fn crt_lift(&self, comp: usize, h: u64) -> u64 {
        let pa = self.comps[comp].pa;
        let rest = self.modulus / pa;
        // y = h·rest·(rest^{-1} mod pa) + 1·pa·(pa^{-1} mod rest)
        let r_inv = inverse_mod(rest as i64, pa).unwrap();
        let p_inv = inverse_mod(pa as i64, rest).unwrap();
        let m = self.modulus as u128;
        let y = (h as u128 * rest as u128 % m * r_inv as u128
            + pa as u128 * p_inv as u128)
            % m;
        y as u64
    }
}

/// A Dirichlet character modulo c, stored by its exponents on the CRT generators.
#[derive(Debug, Clone)]
pub struct DirichletCharacter {
    group: Arc<CharacterGroup>,
    exps: Vec<Vec<u64>>,
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.group.modulus == other.group.modulus && self.exps == other.exps
    }
}

/// All Dirichlet characters modulo c.
pub fn characters(c: u64) -> Vec<DirichletCharacter> {
    CharacterGroup::new(c).characters()
}

impl DirichletCharacter {
    /// The principal character modulo c.
    pub fn principal(c: u64) -> Self {
        let group = CharacterGroup::new(c);
        let exps = group.comps.iter().map(|g| vec![0; g.orders.len()]).collect();
        Self { group, exps }
    }

    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    /// χ(n) as an exact phase num/den with den = exponent of the group,
    /// or None when gcd(n, c) > 1.
    pub fn phase(&self, n: i64) -> Option<(u64, u64)> {
        let c = self.group.modulus;
        let x = modulo(n, c);
        if gcd(x, c) != 1 {
            return None;
        }
        let lam = self.group.exponent;
        let mut num: u128 = 0;
        for (comp, exps) in self.group.comps.iter().zip(&self.exps) {
            let logs = comp.dlog[(x % comp.pa) as usize].expect("unit residue");
            for (g, (&e, &o)) in exps.iter().zip(&comp.orders).enumerate() {
                num += (e as u128 * logs[g] as u128 % o as u128) * (lam / o) as u128;
            }
        }
        Some(((num % lam as u128) as u64, lam))
    }

    /// χ(n).
    pub fn evaluate(&self, n: i64) -> Complex64 {
        match self.phase(n) {
            Some((num, den)) => unit_root(num, den),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_principal(&self) -> bool {
        self.exps.iter().flatten().all(|&e| e == 0)
    }

    /// Order of χ in the character group.
    pub fn order(&self) -> u64 {
        let mut ord = 1u64;
        for (comp, exps) in self.group.comps.iter().zip(&self.exps) {
            for (&e, &o) in exps.iter().zip(&comp.orders) {
                ord = ord.lcm(&(o / e.gcd(&o)));
            }
        }
        ord
    }

    /// Complex conjugate character.
    pub fn conj(&self) -> Self {
        let exps = self
            .group
            .comps
            .iter()
            .zip(&self.exps)
            .map(|(comp, es)| {
                es.iter()
                    .zip(&comp.orders)
                    .map(|(&e, &o)| (o - e) % o)
                    .collect()
            })
            .collect();
        Self {
            group: Arc::clone(&self.group),
            exps,
        }
    }

    /// Product of two characters of the same modulus.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.modulus(), other.modulus(), "moduli differ");
        let exps = self
            .group
            .comps
            .iter()
            .zip(self.exps.iter().zip(&other.exps))
            .map(|(comp, (a, b))| {
                a.iter()
                    .zip(b)
                    .zip(&comp.orders)
                    .map(|((&x, &y), &o)| (x + y) % o)
                    .collect()
            })
            .collect();
        Self {
            group: Arc::clone(&self.group),
            exps,
        }
    }

    /// χ^j.
    pub fn pow(&self, j: u64) -> Self {
        let exps = self
            .group
            .comps
            .iter()
            .zip(&self.exps)
            .map(|(comp, es)| {
                es.iter()
                    .zip(&comp.orders)
                    .map(|(&e, &o)| (e as u128 * j as u128 % o as u128) as u64)
                    .collect()
            })
            .collect();
        Self {
            group: Arc::clone(&self.group),
            exps,
        }
    }

    /// The character modulo a multiple M of c induced by χ: x ↦ χ(x) when
    /// gcd(x, M) = 1 and 0 otherwise.
    pub fn lift(&self, new_modulus: u64) -> Self {
        let c = self.modulus();
        assert!(new_modulus % c == 0, "lift target must be a multiple of the modulus");
        let group = CharacterGroup::new(new_modulus);
        let mut exps = Vec::with_capacity(group.comps.len());
        for (ci, comp) in group.comps.iter().enumerate() {
            let mut es = Vec::with_capacity(comp.gens.len());
            for (&g, &o) in comp.gens.iter().zip(&comp.orders) {
                let y = group.crt_lift(ci, g);
                let (num, den) = self.phase(y as i64).expect("lifted generator is a unit");
                let e = (num as u128 * o as u128) / den as u128;
                debug_assert_eq!((num as u128 * o as u128) % den as u128, 0);
                es.push((e % o as u128) as u64);
            }
            exps.push(es);
        }
        Self { group, exps }
    }

    /// Conductor: the least modulus from which χ is induced.
    pub fn conductor(&self) -> u64 {
        let mut f = 1u64;
        for (comp, es) in self.group.comps.iter().zip(&self.exps) {
            if comp.p == 2 {
                match comp.a {
                    1 => {}
                    2 => {
                        if es[0] != 0 {
                            f *= 4;
                        }
                    }
                    _ => {
                        let o5 = comp.orders[1];
                        if es[1] != 0 {
                            let ord = o5 / es[1].gcd(&o5);
                            f *= 4 * ord;
                        } else if es[0] != 0 {
                            f *= 4;
                        }
                    }
                }
            } else if es[0] != 0 {
                let o = comp.orders[0];
                let mut ord = o / es[0].gcd(&o);
                let mut v = 0;
                while ord % comp.p == 0 {
                    ord /= comp.p;
                    v += 1;
                }
                f *= comp.p.pow(1 + v);
            }
        }
        f
    }

    pub fn is_primitive(&self) -> bool {
        self.conductor() == self.modulus()
    }

    /// Gauss sum τ(χ) = Σ_{a mod c} χ(a) e(a/c).
    pub fn gauss_sum(&self) -> Complex64 {
        let c = self.modulus();
        let mut acc = CompensatedComplex::new();
        for a in 0..c {
            if let Some((num, den)) = self.phase(a as i64) {
                // χ(a)e(a/c) = e(num/den + a/c)
                let l = den.lcm(&c);
                let total = (num as u128 * (l / den) as u128 + a as u128 * (l / c) as u128)
                    % l as u128;
                acc.add(unit_root(total as u64, l));
            }
        }
        acc.value()
    }

    /// Table of χ(a) for a = 0, …, c − 1.
    pub fn values(&self) -> Vec<Complex64> {
        (0..self.modulus()).map(|a| self.evaluate(a as i64)).collect()
    }
}
