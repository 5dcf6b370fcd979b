use fbl_qos::fbc::{dispersion, g_bounds, normal_approx_rate, rate_function_r, GBoundConstants};
use fbl_qos::specfun::LOG2_E;
use fbl_qos::{Error, FbcParams, PowerPolicy, RateCurve};
use proptest::prelude::*;

// 30-digit references.
const V_AT_10: f64 = 2.064_167_584_468_371_4;
const AWGN_512: f64 = 3.197_422_706_703_419_3;
const RATE_500: f64 = 3.269_843_420_079_910_5;
const RATE_1E8: f64 = 3.458_987_771_311_582_9;

#[test]
fn dispersion_values() {
    assert_eq!(dispersion(0.0).unwrap(), 0.0);
    assert!((dispersion(1e300).unwrap() - 2.081_368_981_005_607_7).abs() < 1e-12);
    assert!((dispersion(10.0).unwrap() - V_AT_10).abs() < 1e-14);
    assert!(matches!(dispersion(-0.5), Err(Error::Domain { .. })));
}

#[test]
fn normal_approximation_examples() {
    let p = FbcParams::new(512.0, 1e-5, 10.0).unwrap();
    let r = normal_approx_rate(&p, 1.0).unwrap();
    assert!((r.bits_per_channel_use - AWGN_512).abs() < 1e-12);
    assert!((r.total_bits - 512.0 * r.bits_per_channel_use).abs() < 1e-9);
    // term by term
    let parts = 11f64.log2() - (V_AT_10 / 512.0).sqrt() * 4.264_890_793_922_825 + 9.0 / 1024.0;
    assert!((r.bits_per_channel_use - parts).abs() < 1e-12);

    let half = FbcParams::new(512.0, 0.5, 10.0).unwrap();
    let r = normal_approx_rate(&half, 1.0).unwrap();
    assert!((r.total_bits - (512.0 * 11f64.log2() + 4.5)).abs() < 1e-9);

    let r0 = normal_approx_rate(&p, 0.0).unwrap();
    assert!((r0.total_bits - 4.5).abs() < 1e-12);
    assert!(normal_approx_rate(&p, -1.0).is_err());
}

#[test]
fn params_validate() {
    assert!(FbcParams::new(0.5, 1e-3, 10.0).is_err());
    assert!(FbcParams::new(100.0, 0.0, 10.0).is_err());
    assert!(FbcParams::new(100.0, 0.6, 10.0).is_err());
    assert!(FbcParams::new(100.0, 1e-3, 0.0).is_err());
    let p = FbcParams::new(500.0, 1e-3, 10.0).unwrap();
    let q = 3.090_232_306_167_813_5;
    assert!((p.ell().unwrap() - q * q / 500.0).abs() < 1e-14);
}

#[test]
fn rate_function_matches_normal_approximation() {
    let p = FbcParams::new(500.0, 1e-3, 10.0).unwrap();
    let fixed = PowerPolicy::Fixed { snr: 10.0 };
    assert!((rate_function_r(1.0, &fixed, &p).unwrap() - RATE_500).abs() < 1e-12);
    // The literal per-use form with an explicit log₂e factor.
    let u: f64 = 10.0;
    let literal = u.ln_1p() * LOG2_E - ((1.0 - (1.0 + u).powi(-2)) / 500.0).sqrt() * 3.090_232_306_167_813_5 * LOG2_E
        + 500f64.log2() / 1000.0;
    assert!((rate_function_r(1.0, &fixed, &p).unwrap() - literal).abs() < 1e-12);
    for x in [0.0, 1e-3, 0.2, 1.0, 17.0] {
        let a = rate_function_r(x, &fixed, &p).unwrap();
        let b = normal_approx_rate(&p, x).unwrap().total_bits / 500.0;
        assert!((a - b).abs() < 1e-13, "x={x}");
    }
    assert!((rate_function_r(0.0, &fixed, &p).unwrap() - 500f64.log2() / 1000.0).abs() < 1e-15);
}

#[test]
fn long_block_limit() {
    let p = FbcParams::new(1e8, 1e-3, 10.0).unwrap();
    let r = normal_approx_rate(&p, 1.0).unwrap().bits_per_channel_use;
    assert!((r - RATE_1E8).abs() < 1e-10);
    assert!((r - 11f64.log2()).abs() < 1e-3);
}

#[test]
fn analytic_derivatives_match_differences() {
    let p = FbcParams::new(500.0, 1e-3, 10.0).unwrap();
    let curve = RateCurve::new(&p).unwrap();
    for policy in [
        PowerPolicy::Fixed { snr: 10.0 },
        PowerPolicy::WaterFilling { nu0: 0.09, gbar: 1.0 },
        PowerPolicy::TangZhang { a1: 0.5, a2: 0.3, snr: 10.0 },
    ] {
        for x in [0.2, 0.9, 3.0] {
            let (_, d1, d2) = curve.r_derivs(&policy, x);
            let h = 1e-4 * x;
            let r = |t: f64| curve.r(&policy, t);
            let fd1 = (r(x + h) - r(x - h)) / (2.0 * h);
            let fd2 = (r(x + h) - 2.0 * r(x) + r(x - h)) / (h * h);
            assert!(((d1 - fd1) / d1).abs() < 1e-6, "{policy:?} x={x} r′");
            assert!(((d2 - fd2) / d2).abs() < 1e-5, "{policy:?} x={x} r″");
        }
    }
}

#[test]
fn g_bounds_threshold_and_values() {
    // N = 1e4 is below the ε threshold (≈ 3.3e7) at gγ = 10, ε = 1e-3.
    let p = FbcParams::new(1e4, 1e-3, 10.0).unwrap();
    match g_bounds(&p, 1.0, GBoundConstants::default()) {
        Err(Error::Threshold { which, required, .. }) => {
            assert!(which.contains("eps"));
            assert!(required > 3e7 && required < 4e7);
        }
        other => panic!("expected threshold error, got {other:?}"),
    }
    let p = FbcParams::new(1e8, 1e-3, 10.0).unwrap();
    let b = g_bounds(&p, 1.0, GBoundConstants::default()).unwrap();
    assert!(b.lower.is_finite() && b.upper.is_finite() && b.lower <= b.upper);

    // ε = 0.5: the bracket width grows like log₂N.
    let w = |n: f64| {
        let b = g_bounds(&FbcParams::new(n, 0.5, 10.0).unwrap(), 1.0, GBoundConstants::default()).unwrap();
        b.upper - b.lower
    };
    let (w1, w2) = (w(1e4), w(1e6));
    assert!(w1 > 0.0 && ((w2 - w1) - 0.5 * 100f64.log2()).abs() < 0.5, "{w1} {w2}");
}

#[test]
fn g_bounds_never_invert_on_grid() {
    let mut evaluated = 0;
    for i in 0..50 {
        for j in 0..50 {
            let gain = 10f64.powf(-2.0 + 5.0 * i as f64 / 49.0);
            let eps = 10f64.powf(-6.0 + (0.5f64.log10() + 6.0) * j as f64 / 49.0).min(0.5);
            let p = FbcParams::new(1e6, eps, 1.0).unwrap();
            if let Ok(b) = g_bounds(&p, gain, GBoundConstants::default()) {
                evaluated += 1;
                assert!(b.lower <= b.upper, "gain={gain} eps={eps}");
            }
        }
    }
    assert!(evaluated > 500);
}

proptest! {
    #[test]
    fn rate_monotone_in_gain_and_snr(n in 10.0f64..5000.0, leps in -9.0f64..-0.302, g in 1e-3f64..100.0, dg in 1e-3f64..10.0) {
        let p = FbcParams::new(n.round(), 10f64.powf(leps), 5.0).unwrap();
        let a = normal_approx_rate(&p, g).unwrap().total_bits;
        let b = normal_approx_rate(&p, g + dg).unwrap().total_bits;
        prop_assert!(b >= a);
        let q = FbcParams { snr: 5.0 * (1.0 + dg), ..p };
        prop_assert!(normal_approx_rate(&q, g).unwrap().total_bits >= a);
    }

    #[test]
    fn smaller_eps_lowers_rate(leps in -12.0f64..-0.4, shrink in 0.01f64..0.9) {
        let p = FbcParams::new(256.0, 10f64.powf(leps), 3.0).unwrap();
        let q = FbcParams { error_prob: p.error_prob * shrink, ..p };
        prop_assert!(normal_approx_rate(&q, 1.0).unwrap().total_bits < normal_approx_rate(&p, 1.0).unwrap().total_bits);
    }

    #[test]
    fn rate_below_capacity_plus_offset(n in 1.0f64..1e5, leps in -12.0f64..-0.302, g in 0.0f64..1e3) {
        let p = FbcParams::new(n.round(), 10f64.powf(leps), 1.0).unwrap();
        let r = normal_approx_rate(&p, g).unwrap().total_bits;
        prop_assert!(r <= p.blocklength * g.ln_1p() * LOG2_E + 0.5 * p.blocklength.log2() + 1e-9);
    }

    #[test]
    fn dispersion_monotone(u in 0.0f64..1e6, du in 1e-6f64..10.0) {
        prop_assert!(dispersion(u + du).unwrap() >= dispersion(u).unwrap());
        prop_assert!(dispersion(u).unwrap() <= LOG2_E * LOG2_E);
    }
}
