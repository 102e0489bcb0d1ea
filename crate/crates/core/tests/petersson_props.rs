use lowlying::arith::gcd;
use lowlying::petersson::{
    delta_q, delta_q_star, delta_q_star_with, delta_star_batch, ng_terms, ng_terms_by_sublevel,
    FamilyParams, StarRequest, TruncationPolicy,
};
use lowlying::Error;
use proptest::prelude::*;

mod common;
use common::ramanujan_tau;

#[test]
fn eta_oracle_known_values() {
    let t = ramanujan_tau(6);
    assert_eq!(&t[1..], &[1, -24, 252, -1472, 4830, -6048]);
}

#[test]
fn level_one_weight_twelve_matches_ramanujan_tau() {
    let tau = ramanujan_tau(5);
    let p = FamilyParams::new(12, 1).unwrap();
    let base = delta_q(p, 1, 1, 1e-12).unwrap();
    for m in 2..=5u64 {
        let r = delta_q(p, m, 1, 1e-12).unwrap();
        let want = tau[m as usize] as f64 / (m as f64).powf(5.5);
        assert!((r.value / base.value - want).abs() < 1e-9, "m={m}");
    }
}

#[test]
fn weight_twelve_level_one_is_one_dimensional() {
    // Δ₁(m,n)Δ₁(1,1) = Δ₁(m,1)Δ₁(n,1) for a one-dimensional space.
    let p = FamilyParams::new(12, 1).unwrap();
    let d = |m, n| delta_q(p, m, n, 1e-12).unwrap().value;
    for (m, n) in [(2, 3), (2, 2), (3, 5)] {
        assert!((d(m, n) * d(1, 1) - d(m, 1) * d(n, 1)).abs() < 1e-9);
    }
}

#[test]
fn no_cusp_forms_below_weight_twelve_at_level_one() {
    // S_k(1) = 0 for k ∈ {4,6,8,10}, so Δ₁(1,1) = 0.
    for k in [4u32, 6, 8, 10] {
        let r = delta_q(FamilyParams::new(k, 1).unwrap(), 1, 1, 1e-6).unwrap();
        assert!(r.value.abs() <= 1e-9 + r.tail_bound, "k={k}: {}", r.value);
    }
}

#[test]
fn newform_average_vanishes_without_newforms() {
    // S_12^new(2) = 0 (dim S_12(2) = 2 = twice dim S_12(1)).
    let r = delta_q_star_with(
        FamilyParams::new(12, 2).unwrap(),
        1,
        1,
        &TruncationPolicy::budgeted(1e-8, 1 << 15),
    )
    .unwrap();
    assert!(r.value.abs() <= r.tail_bound + 1e-8, "{r:?}");
}

#[test]
fn squarefree_prime_level_newforms_match_oldform_subtraction() {
    // q = 11, k = 8: Δ*₁₁(1,1) equals the full average since S_8(1) = 0.
    let p = FamilyParams::new(8, 11).unwrap();
    let star = delta_q_star_with(p, 1, 1, &TruncationPolicy::budgeted(1e-6, 1 << 15)).unwrap();
    let full = delta_q(p, 1, 1, 1e-8).unwrap();
    assert!((star.value - full.value).abs() <= star.tail_bound + full.tail_bound + 1e-8);
}

#[test]
fn strict_mode_reports_achievable_bound() {
    let mut policy = TruncationPolicy::strict(1e-14);
    policy.modulus_cap = 1 << 10;
    match delta_q_star_with(FamilyParams::new(12, 12).unwrap(), 1, 1, &policy) {
        Err(Error::TruncationInfeasible { requested, achievable }) => {
            assert_eq!(requested, 1e-14);
            assert!(achievable > requested);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn star_rejects_non_coprime_indices() {
    let p = FamilyParams::new(12, 6).unwrap();
    assert!(matches!(delta_q_star(p, 2, 1, 1e-8), Err(Error::Precondition(_))));
}

#[test]
fn parallel_sweep_matches_sequential_bitwise() {
    lowlying::petersson::clear_cache();
    let reqs: Vec<StarRequest> = [(12u64, 5u64, 1u64), (35, 2, 3), (36, 7, 1)]
        .iter()
        .map(|&(q, m, n)| StarRequest { q, m, n })
        .collect();
    let mut policy = TruncationPolicy::budgeted(1e-8, 1 << 12);
    let seq = delta_star_batch(12, &reqs, &policy).unwrap();
    lowlying::petersson::clear_cache();
    policy.parallel = true;
    let par = delta_star_batch(12, &reqs, &policy).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn sieve_term_count_for_small_levels() {
    // q = 12 = 2²·3: L₁ ∈ {1,2}, L₂ ∈ {1,3}.
    let t = ng_terms(12);
    assert_eq!(t.len(), 4);
    assert_eq!(ng_terms_by_sublevel(12).len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn sieve_routes_agree(q in 1u64..400) {
        let a = ng_terms(q);
        let b = ng_terms_by_sublevel(q);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.l1, x.l2, x.d), (y.l1, y.l2, y.d));
            prop_assert!((x.weight - y.weight).abs() < 1e-15);
            prop_assert_eq!(gcd(x.l2, x.d), 1);
        }
    }

    #[test]
    fn delta_is_symmetric(m in 1u64..12, n in 1u64..12, q in 1u64..30) {
        let p = FamilyParams::new(8, q).unwrap();
        let a = delta_q(p, m, n, 1e-10).unwrap();
        let b = delta_q(p, n, m, 1e-10).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12 + a.tail_bound + b.tail_bound);
    }
}
