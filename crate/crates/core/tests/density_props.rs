use lowlying::arith::{self, characters};
use lowlying::density::*;
use lowlying::petersson::{delta_q_star_with, FamilyParams, StarRequest, TruncationPolicy};
use lowlying::testfn::{make_dyadic_window, make_fejer, make_smooth_bump, make_weight};
use lowlying::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn policy() -> TruncationPolicy {
    TruncationPolicy::budgeted(1e-8, 16384)
}

fn config() -> FamilyConfig {
    FamilyConfig::new(12, policy())
}

#[test]
fn reductions_of_prime_power_coefficients() {
    let r = cf_reduce(CoefficientMode::CfPrime, 2, 5).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!((r[0].coeff, r[0].request), (1.0, StarRequest { q: 5, m: 2, n: 1 }));
    let r = cf_reduce(CoefficientMode::CfPrimeSquare, 3, 5).unwrap();
    let got: Vec<(f64, u64)> = r.iter().map(|t| (t.coeff, t.request.m)).collect();
    assert_eq!(got, vec![(1.0, 9), (-1.0, 1)]);
    let r = cf_reduce(CoefficientMode::CfPower(4), 2, 7).unwrap();
    let got: Vec<(f64, u64)> = r.iter().map(|t| (t.coeff, t.request.m)).collect();
    assert_eq!(got, vec![(1.0, 16), (-1.0, 4)]);
    assert!(matches!(cf_reduce(CoefficientMode::CfPrime, 5, 10), Err(Error::Unsupported(_))));
    assert!(cf_reduce(CoefficientMode::CfPrime, 4, 7).is_err());
    assert!(CoefficientMode::for_exponent(0).is_err());
    assert!(hecke_combination(CoefficientMode::CfPower(2)).is_err());
}

#[test]
fn predictions_for_concrete_pairs() {
    assert_eq!(rmt_prediction(&make_fejer(1.0).unwrap()), 1.5);
    assert_eq!(rmt_prediction(&make_fejer(2.0).unwrap()), 2.0);
    let bump = make_smooth_bump(1.0).unwrap();
    let phi0 = lowlying::quad::composite(|t| bump.phi_hat(t), -1.0, 1.0, 2000);
    assert!((rmt_prediction(&bump) - (1.0 + phi0 / 2.0)).abs() < 1e-10);
}

#[test]
fn explicit_formula_sum_matches_hand_assembly() {
    let (q, k) = (101u64, 12u32);
    let phi = make_fejer(1.0).unwrap();
    let got = explicit_formula_sum(q, k, &phi, &policy()).unwrap();
    // Straight-line reassembly over the prime powers n < 101 (all coprime to
    // the prime level 101).
    let params = FamilyParams::new(k, q).unwrap();
    let star = |m: u64| delta_q_star_with(params, m, 1, &policy()).unwrap().value;
    let log_q = (q as f64).ln();
    let mut want = 0.0;
    for n in 2..q {
        let lambda = arith::von_mangoldt(n);
        if lambda == 0.0 {
            continue;
        }
        let p = arith::prime_divisors(n)[0];
        let nu = (n as f64).ln() / (p as f64).ln();
        let nu = nu.round() as u32;
        let average = match nu {
            1 => star(p),
            2 => star(p * p) - star(1),
            _ => star(n) - star(n / (p * p)),
        };
        want += lambda * (n as f64).powf(-0.5) * phi.phi_hat((n as f64).ln() / log_q) * average / log_q;
    }
    assert!((got.value - want).abs() < 1e-12, "{} vs {want}", got.value);
    assert_eq!(got.prime_cutoff, 97);
    assert!(got.higher_part.abs() <= got.higher_bound);
    assert!(got.tail_bound >= 0.0 && got.ramified_ledger == 0.0);
}

#[test]
fn explicit_formula_sum_edge_cases() {
    let narrow = make_fejer(0.1).unwrap();
    let s = explicit_formula_sum(101, 12, &narrow, &policy()).unwrap();
    assert_eq!(s.value, 0.0);
    assert!(matches!(
        explicit_formula_sum(1, 12, &make_fejer(1.0).unwrap(), &policy()),
        Err(Error::Domain(_))
    ));
}

#[test]
fn higher_power_block_obeys_its_bound() {
    let phi = make_fejer(1.0).unwrap();
    for q in [60u64, 64, 90, 127, 128] {
        let s = explicit_formula_sum(q, 12, &phi, &policy()).unwrap();
        assert!(s.higher_part.abs() <= s.higher_bound, "q={q}: {s:?}");
        // The a-priori bound (2/log q)·Σ_{p^ν<q, ν≥3} log p·p^{−ν/2}·max|Φ̂|
        // times the normaliser bound.
        let log_q = (q as f64).ln();
        let apriori: f64 = (2..q)
            .filter(|&n| arith::von_mangoldt(n) > 0.0 && arith::factorize(n)[0].1 >= 3)
            .map(|n| 2.0 * arith::von_mangoldt(n) * (n as f64).powf(-0.5) / log_q)
            .sum();
        let norm = delta_q_star_with(FamilyParams::new(12, q).unwrap(), 1, 1, &policy()).unwrap();
        assert!(s.higher_part.abs() <= apriori * (norm.value + norm.tail_bound) + 1e-15);
    }
}

#[test]
fn normaliser_support_and_growth() {
    let psi = make_weight(1.0, 2.0).unwrap();
    let report = one_level_density(10, &make_fejer(0.5).unwrap(), &psi, &config()).unwrap();
    let levels: Vec<u64> = report.q_grid.iter().map(|&(q, _)| q).collect();
    assert_eq!(levels, (11..=19).collect::<Vec<_>>());
    let mut ratios = Vec::new();
    for big_q in [64u64, 128, 256] {
        let n = n_of_q(big_q, 12, &psi, &policy()).unwrap();
        assert!(n.value > n.tail_bound);
        ratios.push(n.value / (big_q as f64 * psi.psi_hat_zero));
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
    assert!(hi <= 1.25 * lo, "{ratios:?}");
}

#[test]
fn statistic_is_invariant_under_weight_scaling() {
    let phi = make_fejer(1.0).unwrap();
    let psi = make_weight(1.0, 2.0).unwrap();
    let a = one_level_density(16, &phi, &psi, &config()).unwrap();
    let b = one_level_density(16, &phi, &psi.scaled(3.0).unwrap(), &config()).unwrap();
    assert!((a.statistic - b.statistic).abs() <= 1e-12 * a.statistic.abs());
    assert_eq!(a.prediction, 1.5);
    assert!(a.prime_cutoff >= 2 && a.statistic.is_finite());
}

#[test]
fn larger_prime_budget_changes_nothing() {
    let phi = make_fejer(1.0).unwrap();
    let psi = make_weight(1.0, 2.0).unwrap();
    let a = one_level_density(16, &phi, &psi, &config()).unwrap();
    let mut cfg = config();
    cfg.prime_budget *= 16;
    let b = one_level_density(16, &phi, &psi, &cfg).unwrap();
    assert_eq!(a.statistic, b.statistic);
    cfg.prime_budget = 8;
    assert!(matches!(one_level_density(16, &phi, &psi, &cfg), Err(Error::Budget { .. })));
}

#[test]
fn sigma1_routes_agree_and_shrink() {
    let phi = make_fejer(1.0).unwrap();
    let psi = make_weight(1.0, 2.0).unwrap();
    let mut previous: Option<f64> = None;
    for big_q in [16u64, 32, 64] {
        let direct = sigma1_direct(big_q, &phi, &psi, &config()).unwrap();
        let expanded = sigma1_expanded(big_q, &phi, &psi, &config(), UNCAPPED, UNCAPPED).unwrap();
        assert!(expanded.discarded_bound == 0.0);
        let tol = direct.tail_bound + expanded.tail_bound + 1e-9;
        assert!((direct.value - expanded.value).abs() <= tol, "Q={big_q}: {direct:?} vs {expanded:?}");
        if let Some(p) = previous {
            assert!(direct.value.abs() <= p.abs() + 0.05, "Q={big_q}");
        }
        previous = Some(direct.value);
    }
    assert!(sigma1_expanded(16, &phi, &psi, &config(), 0, 5).is_err());
    let narrow = make_fejer(0.1).unwrap();
    assert_eq!(sigma1_direct(16, &narrow, &psi, &config()).unwrap().value, 0.0);
}

#[test]
fn asymptotic_caps_stay_within_their_ledger() {
    let phi = make_fejer(1.0).unwrap();
    let psi = make_weight(1.0, 2.0).unwrap();
    let direct = sigma1_direct(32, &phi, &psi, &config()).unwrap();
    let (l0, e) = asymptotic_caps(32);
    let capped = sigma1_expanded(32, &phi, &psi, &config(), l0, e).unwrap();
    let tol = direct.tail_bound + capped.tail_bound + capped.discarded_bound + 1e-9;
    assert!((direct.value - capped.value).abs() <= tol);
    // Tight caps discard more, and the ledger grows to cover it.
    let tight = sigma1_expanded(32, &phi, &psi, &config(), 1, 1).unwrap();
    assert!(tight.discarded_bound >= capped.discarded_bound);
    let tol = direct.tail_bound + tight.tail_bound + tight.discarded_bound + 1e-9;
    assert!((direct.value - tight.value).abs() <= tol);
}

#[test]
fn smoothed_prime_sums() {
    let window = make_dyadic_window();
    // [0.45, 1.8] holds no primes.
    let empty = smoothed_prime_sum(&PrimeWeights::Trivial, 0.0, &window, 0.9, 0.0, 1).unwrap();
    assert_eq!(empty.sum, Complex64::new(0.0, 0.0));
    assert_eq!(empty.primes, 0);
    let chi = characters(7).into_iter().find(|x| x.order() == 6).unwrap();
    let x = 1e5f64;
    let s = smoothed_prime_sum(&PrimeWeights::Character(chi), 0.0, &window, x, 0.0, 7).unwrap();
    assert!(s.sum.norm().is_finite() && s.main_term.is_none());
    println!("monitor: |Σχ(p)log p V(p/X)p^{{-1/2}}| = {:.3} vs 50·log²X = {:.3}", s.sum.norm(), 50.0 * x.ln().powi(2));
    let t = smoothed_prime_sum(&PrimeWeights::Trivial, 1.0, &window, 1e4, 0.0, 1).unwrap();
    let (main, residual) = (t.main_term.unwrap(), t.residual.unwrap());
    assert!((t.sum - main - residual).norm() < 1e-9);
    assert!(residual.norm() / main.norm() < 0.2);
    assert!(smoothed_prime_sum(&PrimeWeights::Trivial, 1.0, &window, 0.0, 0.0, 1).is_err());
}

fn lambda_power(alpha: Complex64, nu: u32) -> Complex64 {
    (0..=nu).map(|j| alpha.powi(nu as i32 - 2 * j as i32)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hecke_combinations_recover_power_sums(theta in 0.0f64..std::f64::consts::TAU, nu in 1u32..9) {
        // α on the unit circle with β = ᾱ = 1/α; λ(p^j) = Σ_{i=0..j} α^{j−2i}.
        let alpha = Complex64::from_polar(1.0, theta);
        let target = alpha.powi(nu as i32) + alpha.conj().powi(nu as i32);
        let combo = hecke_combination(CoefficientMode::for_exponent(nu).unwrap()).unwrap();
        let got: Complex64 = combo.iter().map(|&(c, j)| c * lambda_power(alpha, j)).sum();
        // ν = 2 subtracts χ₀(p) = 1 = λ(p⁰).
        prop_assert!((got - target).norm() < 1e-12);
    }
}
