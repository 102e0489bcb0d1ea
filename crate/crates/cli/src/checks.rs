//! Quick verification suites behind `arith-check` and `selftest`.

use lowlying::arith::{self, characters, gcd, kloosterman, mobius, weil_bound};
use lowlying::density::{self, FamilyConfig, PrimeWeights, UNCAPPED};
use lowlying::eisenstein::{cusps, dirichlet_l};
use lowlying::kuznetsov::{phi_plus, KernelSpec, Window};
use lowlying::petersson::{delta_q, delta_q_star_with, FamilyParams, TruncationPolicy};
use lowlying::specfun::{bessel_j_asymptotic, bessel_j_series};
use lowlying::testfn::{make_dyadic_window, make_fejer, make_weight};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

/// Selberg identity, Weil bound, twisted multiplicativity, Kluyver's formula,
/// character orthogonality and Gauss-sum moduli for moduli up to `c_max`.
pub fn arith_suite(c_max: u64) -> Vec<Check> {
    let mut selberg = 0.0f64;
    let mut weil = f64::NEG_INFINITY;
    for c in 1..=c_max {
        for m in 1..=30i64 {
            for n in 1..=30i64 {
                let s = kloosterman(m, n, c);
                let g = gcd(gcd(m as u64, n as u64), c);
                let rhs: f64 = arith::divisors(g)
                    .into_iter()
                    .map(|d| d as f64 * kloosterman(m * n / (d * d) as i64, 1, c / d))
                    .sum();
                selberg = selberg.max((s - rhs).abs());
                weil = weil.max(s.abs() - weil_bound(m, n, c));
            }
        }
    }
    let mut twisted = 0.0f64;
    for c1 in 1..=c_max {
        for c2 in 1..=c_max / c1 {
            if gcd(c1, c2) != 1 {
                continue;
            }
            let i1 = arith::inverse_mod(c1 as i64, c2).unwrap_or(0) as i64;
            let i2 = arith::inverse_mod(c2 as i64, c1).unwrap_or(0) as i64;
            for (m, n) in [(1i64, 1i64), (3, 5)] {
                let lhs = kloosterman(m, n, c1 * c2);
                let rhs = kloosterman(m * i2 * i2, n, c1) * kloosterman(m * i1 * i1, n, c2);
                twisted = twisted.max((lhs - rhs).abs());
            }
        }
    }
    let kluyver = (1..=c_max)
        .map(|c| (kloosterman(1, 0, c) - mobius(c) as f64).abs())
        .fold(0.0f64, f64::max);
    let mut orthogonality = 0.0f64;
    let mut gauss = 0.0f64;
    for c in 1..=c_max {
        let chars = characters(c);
        for a in (1..=c).filter(|&a| gcd(a, c) == 1) {
            let total: Complex64 = chars.iter().map(|x| x.evaluate(a as i64)).sum();
            let want = if a % c == 1 % c { chars.len() as f64 } else { 0.0 };
            orthogonality = orthogonality.max((total - want).norm());
        }
        for chi in chars.iter().filter(|x| x.is_primitive()) {
            gauss = gauss.max((chi.gauss_sum().norm() - (c as f64).sqrt()).abs());
        }
    }
    vec![
        check("selberg identity", selberg <= 1e-9, format!("max deviation {selberg:.3e}")),
        check("weil bound", weil <= 1e-9, format!("max excess {weil:.3e}")),
        check("twisted multiplicativity", twisted <= 1e-9, format!("max deviation {twisted:.3e}")),
        check("kluyver formula", kluyver <= 1e-9, format!("max deviation {kluyver:.3e}")),
        check("character orthogonality", orthogonality <= 1e-9, format!("max deviation {orthogonality:.3e}")),
        check("gauss sum modulus", gauss <= 1e-9, format!("max deviation {gauss:.3e}")),
    ]
}

/// Level-1 weight-12 ratios against τ(m)/m^{11/2} (τ(2..5) hard-coded).
fn tau_check() -> Check {
    let tau = [-24.0, 252.0, -1472.0, 4830.0];
    let p = FamilyParams::new(12, 1).expect("valid family");
    let run = || -> lowlying::Result<f64> {
        let base = delta_q(p, 1, 1, 1e-12)?.value;
        let mut worst = 0.0f64;
        for (i, t) in tau.iter().enumerate() {
            let m = i as u64 + 2;
            let r = delta_q(p, m, 1, 1e-12)?.value / base;
            worst = worst.max((r - t / (m as f64).powf(5.5)).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("trace formula vs tau", w <= 1e-6, format!("max deviation {w:.3e}")),
        Err(e) => check("trace formula vs tau", false, e.to_string()),
    }
}

fn hecke_check(policy: &TruncationPolicy) -> Check {
    let run = || -> lowlying::Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for q in [4u64, 9, 35] {
            let params = FamilyParams::new(12, q)?;
            for (m, n) in [(2u64, 3u64), (3, 4), (2, 9), (8, 9)] {
                if gcd(m * n, q) != 1 {
                    continue;
                }
                let a = delta_q_star_with(params, m, n, policy)?;
                let b = delta_q_star_with(params, m * n, 1, policy)?;
                worst = worst.max((a.value - b.value).abs() - a.tail_bound - b.tail_bound - 1e-8);
            }
            for p in [2u64, 3, 5].into_iter().filter(|p| q % p != 0) {
                let pp = delta_q_star_with(params, p, p, policy)?;
                let sq = delta_q_star_with(params, p * p, 1, policy)?;
                let one = delta_q_star_with(params, 1, 1, policy)?;
                let tails = pp.tail_bound + sq.tail_bound + one.tail_bound + 1e-8;
                worst = worst.max((pp.value - sq.value - one.value).abs() - tails);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("hecke relations", w <= 0.0, format!("max excess over tails {w:.3e}")),
        Err(e) => check("hecke relations", false, e.to_string()),
    }
}

fn bessel_check() -> Check {
    let mut worst = 0.0f64;
    for order in 3u32..=15 {
        let x0 = 30.0f64.max(2.0 * order as f64);
        for i in 0..=20 {
            let x = x0 + 0.25 * i as f64;
            let s = bessel_j_series(order, x).value;
            let a = bessel_j_asymptotic(order, x).value;
            worst = worst.max((s - a).abs() / s.abs().max(a.abs()));
        }
    }
    check("bessel regimes", worst <= 1e-8, format!("max relative gap {worst:.3e}"))
}

fn eisenstein_check() -> Check {
    let mut counts = true;
    for n in 1..=200u64 {
        let want: u64 = arith::divisors(n).into_iter().map(|b| arith::euler_phi(gcd(b, n / b))).sum();
        counts &= cusps(n).map(|c| c.len() as u64 == want).unwrap_or(false);
    }
    let chi = characters(4).into_iter().find(|x| !x.is_principal());
    let l = chi
        .and_then(|c| dirichlet_l(Complex64::new(1.0, 0.0), &c).ok())
        .map(|v| (v - PI / 4.0).norm())
        .unwrap_or(f64::INFINITY);
    check(
        "cusps and L-values",
        counts && l <= 1e-8,
        format!("cusp counts {counts}, |L(1,χ₋₄) − π/4| = {l:.3e}"),
    )
}

fn kuznetsov_check() -> Check {
    let mut worst = 0.0f64;
    for x in [0.5, 2.0] {
        match KernelSpec::new(12, x, 0.0, Window::standard()) {
            Ok(spec) => {
                for r in [0.0, 1.5] {
                    worst = match phi_plus(&spec, Complex64::new(r, 0.0)) {
                        Ok(v) => worst.max(v.im.abs()),
                        Err(_) => f64::INFINITY,
                    };
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    check("real kernels give real transforms", worst <= 1e-9, format!("max imaginary part {worst:.3e}"))
}

fn density_check(policy: &TruncationPolicy) -> Check {
    let run = || -> lowlying::Result<(f64, f64, f64)> {
        let phi = make_fejer(1.0)?;
        let psi = make_weight(1.0, 2.0)?;
        let cfg = FamilyConfig::new(12, *policy);
        let direct = density::sigma1_direct(16, &phi, &psi, &cfg)?;
        let expanded = density::sigma1_expanded(16, &phi, &psi, &cfg, UNCAPPED, UNCAPPED)?;
        let stat = density::one_level_density(16, &phi, &psi, &cfg)?.statistic;
        let slack = (direct.value - expanded.value).abs() - direct.tail_bound - expanded.tail_bound - 1e-6;
        Ok((slack, stat, direct.value))
    };
    match run() {
        Ok((slack, stat, s1)) => check(
            "density pipeline",
            slack <= 0.0 && stat.is_finite(),
            format!("routes agree (excess {slack:.3e}), statistic(16) = {stat:.6}, Σ₁(16) = {s1:.3e}"),
        ),
        Err(e) => check("density pipeline", false, e.to_string()),
    }
}

fn main_term_check() -> Check {
    match density::smoothed_prime_sum(&PrimeWeights::Trivial, 1.0, &make_dyadic_window(), 1e4, 0.0, 1) {
        Ok(s) => {
            let ratio = match (s.residual, s.main_term) {
                (Some(r), Some(m)) => r.norm() / m.norm(),
                _ => f64::INFINITY,
            };
            check("prime sum main term", ratio < 0.2, format!("|residual|/|main| = {ratio:.4}"))
        }
        Err(e) => check("prime sum main term", false, e.to_string()),
    }
}

/// Fast end-to-end suite touching every module.
pub fn self_suite(policy: &TruncationPolicy) -> Vec<Check> {
    let gauss_consistency = {
        let c = 13u64;
        let worst = characters(c)
            .iter()
            .map(|chi| {
                let brute: Complex64 = (0..c)
                    .map(|x| chi.evaluate(x as i64) * Complex64::from_polar(1.0, TAU * x as f64 / c as f64))
                    .sum();
                (brute - chi.gauss_sum()).norm()
            })
            .fold(0.0f64, f64::max);
        check("gauss sum by definition", worst <= 1e-9, format!("max deviation {worst:.3e}"))
    };
    let mut out = arith_suite(40);
    out.push(gauss_consistency);
    out.push(tau_check());
    out.push(hecke_check(policy));
    out.push(bessel_check());
    out.push(kuznetsov_check());
    out.push(eisenstein_check());
    out.push(density_check(policy));
    out.push(main_term_check());
    out
}
