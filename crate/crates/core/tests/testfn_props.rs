use lowlying::quad::composite;
use lowlying::testfn::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn pairs() -> Vec<TestFunctionPair> {
    let mut out = Vec::new();
    for sigma in [0.5, 1.0, 2.0] {
        out.push(make_fejer(sigma).unwrap());
        out.push(make_smooth_bump(sigma).unwrap());
    }
    out
}

#[test]
fn fourier_round_trip_for_both_kinds() {
    for pair in pairs() {
        for i in 0..=40 {
            let x = -5.0 + 0.25 * i as f64;
            let back = pair.inverse_transform(x).unwrap();
            assert!((back - pair.phi(x)).abs() < 1e-6, "{:?} σ={} x={x}", pair.kind, pair.sigma);
        }
    }
}

#[test]
fn fejer_closed_form_values() {
    let f = make_fejer(1.0).unwrap();
    assert_eq!(f.phi_zero(), 1.0);
    assert_eq!(f.phi_hat(0.0), 1.0);
    assert_eq!(f.phi_hat(2.0), 0.0);
    // ∫Φ = Φ̂(0) = 1 for σ = 2; Φ(x) = 2·sinc²(2x) decays like 1/x², so
    // integrate a long window and add the averaged tail 2·∫_L^∞ dx/(2π²x²)·2.
    let g = make_fejer(2.0).unwrap();
    let l = 400.0;
    let body = composite(|x| g.phi(x), -l, l, 40_000);
    let tail = 1.0 / (2.0 * PI2 * l);
    assert!((body + tail - 1.0).abs() < 1e-6, "{}", body + tail);
    assert!(make_fejer(0.0).is_err() && make_fejer(-1.0).is_err());
}

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

#[test]
fn bump_values() {
    let b = make_smooth_bump(1.5).unwrap();
    assert_eq!(b.phi_hat(0.0), 1.0);
    assert!(b.phi_hat(1.5 - 1e-9) < 1e-300);
    assert_eq!(b.phi_hat(1.5), 0.0);
    for x in [0.3, 1.7] {
        assert!((b.phi(x) - b.phi(-x)).abs() < 1e-10);
    }
    // Φ(0) = ∫Φ̂ by an independent fixed rule.
    let direct = composite(|t| b.phi_hat(t), -1.5, 1.5, 2000);
    assert!((b.phi_zero() - direct).abs() < 1e-8);
    assert!(make_smooth_bump(f64::NAN).is_err());
}

#[test]
fn weight_function_properties() {
    let w = make_weight(1.0, 2.0).unwrap();
    assert!(w.psi(1.5) > 0.0);
    assert_eq!(w.psi(1.0), 0.0);
    assert_eq!(w.psi(2.0), 0.0);
    let direct = composite(|x| w.psi(x), 1.0, 2.0, 4000);
    assert!((w.psi_hat_zero - direct).abs() < 1e-10);
    // Finite-difference derivatives stay bounded on a grid.
    let h = 1e-5;
    for i in 1..200 {
        let x = 1.0 + i as f64 / 200.0;
        let d = (w.psi(x + h) - w.psi(x - h)) / (2.0 * h);
        assert!(d.abs() < 10.0, "x={x}: {d}");
    }
    assert_eq!(w.level_range(10.0), 11..=19);
    assert!(make_weight(2.0, 1.0).is_err());
    assert!(make_weight(0.0, 1.0).is_err());
}

#[test]
fn dyadic_window_is_a_partition_of_unity() {
    let v = make_dyadic_window();
    let total = |x: f64| (0..=40).map(|j| v.v(x / 2f64.powi(j))).sum::<f64>();
    for x in [1.0, 7.0, 1000.0] {
        assert!((total(x) - 1.0).abs() < 1e-10);
    }
    for i in 0..=600 {
        let x = 10f64.powf(6.0 * i as f64 / 600.0);
        assert!((total(x) - 1.0).abs() < 1e-10, "x={x}");
    }
    assert_eq!(v.v(0.5), 0.0);
    assert_eq!(v.v(2.0), 0.0);
}

#[test]
fn mellin_transform_oracles() {
    let w = make_weight(1.0, 2.0).unwrap();
    let f = |x: f64| Complex64::new(w.psi(x), 0.0);
    let at_one = mellin_numeric(f, Complex64::new(1.0, 0.0), (1.0, 2.0)).unwrap();
    assert!((at_one.re - w.psi_hat_zero).abs() < 1e-8 && at_one.im.abs() < 1e-12);
    let at_two = mellin_numeric(f, Complex64::new(2.0, 0.0), (1.0, 2.0)).unwrap();
    let direct = composite(|x| w.psi(x) * x, 1.0, 2.0, 4000);
    assert!((at_two.re - direct).abs() < 1e-10);
    // Independent fixed-rule oracle for the transform on the half line.
    let oracle = |t: f64| {
        let re = composite(|x| w.psi(x) * x.powf(-0.5) * (t * x.ln()).cos(), 1.0, 2.0, 4000);
        let im = composite(|x| w.psi(x) * x.powf(-0.5) * (t * x.ln()).sin(), 1.0, 2.0, 4000);
        Complex64::new(re, im)
    };
    let low = mellin_numeric(f, Complex64::new(0.5, 0.0), (1.0, 2.0)).unwrap();
    let high = mellin_numeric(f, Complex64::new(0.5, 40.0), (1.0, 2.0)).unwrap();
    assert!((low - oracle(0.0)).norm() < 1e-10 && (high - oracle(40.0)).norm() < 1e-10);
    // The C∞ bump decays like exp(−c√|t|): at t = 40 the ratio is about 0.019.
    let ratio = high.norm() / low.norm();
    assert!(ratio < 0.02, "{ratio}");
    // A (1+|t|)^{−2} envelope fitted on |t| ≤ 40 covers |t| up to 160.
    let scaled = |t: f64| mellin_numeric(f, Complex64::new(0.0, t), (1.0, 2.0)).unwrap().norm() * (1.0 + t).powi(2);
    let fitted = (0..=40).map(|i| scaled(i as f64)).fold(0.0f64, f64::max);
    for t in [60.0, 80.0, 120.0, 160.0] {
        assert!(scaled(t) <= fitted, "t={t}: {} > {fitted}", scaled(t));
    }
    let bad = mellin_numeric(|_| Complex64::new(f64::NAN, 0.0), Complex64::new(1.0, 0.0), (1.0, 2.0));
    assert!(bad.is_err());
    assert!(mellin_numeric(f, Complex64::new(1.0, 0.0), (0.0, 2.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_even_and_phi_hat_supported(sigma in 0.2f64..4.0, x in -10.0f64..10.0, t in 0.0f64..8.0) {
        for pair in [make_fejer(sigma).unwrap(), make_smooth_bump(sigma).unwrap()] {
            prop_assert!((pair.phi(x) - pair.phi(-x)).abs() <= 1e-12 * pair.phi_zero());
            prop_assert_eq!(pair.phi_hat(t), pair.phi_hat(-t));
            if t >= sigma {
                prop_assert_eq!(pair.phi_hat(t), 0.0);
            }
        }
    }

    #[test]
    fn partition_of_unity_holds(logx in 0.0f64..20.0) {
        let v = make_dyadic_window();
        let x = logx.exp();
        let total: f64 = (0..=40).map(|j| v.v(x / 2f64.powi(j))).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weight_is_nonnegative_and_supported(a in 0.1f64..2.0, width in 0.1f64..3.0, x in 0.0f64..6.0) {
        let w = make_weight(a, a + width).unwrap();
        prop_assert!(w.psi(x) >= 0.0);
        if x <= a || x >= a + width {
            prop_assert_eq!(w.psi(x), 0.0);
        }
        prop_assert!(w.psi_hat_zero > 0.0);
    }
}
