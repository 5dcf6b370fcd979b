use fbl_qos::numerics::logspace;
use fbl_qos::specfun::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// Reference values from 30-digit mpmath evaluations.
const Q_AT_4_2649: f64 = 9.999_999_996_543_521e-6;
const QINV_1E5: f64 = 4.264_890_793_922_825;
const W_100: f64 = 3.385_630_140_290_05;
const GAMMA_2_5_1: f64 = 1.128_802_791_889_102_3;
const ABS_Z2M1_CUBED: f64 = 8.691_562_902_725_506;
const K_AT_1: f64 = 4.620_549_413_128_656;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn q_reference_points() {
    assert_eq!(gaussian_q(0.0), 0.5);
    assert!(gaussian_q(40.0) < 1e-300);
    assert!(rel(gaussian_q(4.264890794), Q_AT_4_2649) < 1e-10);
    assert!(rel(gaussian_q_inv(1e-5).unwrap(), QINV_1E5) < 1e-12);
}

#[test]
fn q_relative_accuracy_on_table() {
    // mpmath ncdf(-x)
    let table = [
        (-9.5, 0.999_999_999_999_999_999_9),
        (-2.0, 0.977_249_868_051_820_8),
        (0.5, 0.308_537_538_725_986_9),
        (1.0, 0.158_655_253_931_457_05),
        (3.0, 1.349_898_031_630_094_6e-3),
        (6.0, 9.865_876_450_376_982e-10),
        (10.0, 7.619_853_024_160_527e-24),
    ];
    for (x, q) in table {
        assert!(rel(gaussian_q(x), q) < 1e-12, "x={x}");
    }
}

#[test]
fn q_inv_domain_and_symmetry() {
    assert!(gaussian_q_inv(0.0).is_err());
    assert!(gaussian_q_inv(1.0).is_err());
    assert!(gaussian_q_inv(-0.1).is_err());
    // Dyadic p so that 1 − p is exact.
    for p in [2f64.powi(-40), 2f64.powi(-17), 2f64.powi(-7), 0.25, 0.375] {
        let a = gaussian_q_inv(p).unwrap();
        let b = gaussian_q_inv(1.0 - p).unwrap();
        assert!((a + b).abs() < 1e-9 * a.abs().max(1.0), "p={p}");
    }
}

#[test]
fn q_inv_derivative_matches_differences() {
    for y in [0.01, 0.3, 0.7, 0.95] {
        let h = 1e-6;
        let fd = (gaussian_q_inv(y + h).unwrap() - gaussian_q_inv(y - h).unwrap()) / (2.0 * h);
        assert!(rel(gaussian_q_inv_derivative(y).unwrap(), fd) < 1e-6, "y={y}");
    }
}

#[test]
fn lambert_reference_points() {
    assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
    assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-14);
    assert!(rel(lambert_w0(100.0).unwrap(), W_100) < 1e-13);
    assert!(lambert_w0(-1.0).is_err());
}

#[test]
fn incomplete_gamma_reference_points() {
    // (s, x, Γ(s,x)) from mpmath gammainc.
    let table = [
        (2.5, 1.0, GAMMA_2_5_1),
        (-1.5, 0.3, 2.238_739_379_379_646_6),
        (-2.0, 1e-3, 499_003.915_436_452_86),
        (-0.7, 2.0, 0.024_880_568_252_441_902),
        (0.3, 0.5, 0.556_994_831_009_606_5),
        (3.2, 4.0, 0.665_889_935_633_484_5),
        (-3.0, 10.0, 3.304_101_410_547_010_6e-9),
    ];
    for (s, x, g) in table {
        assert!(rel(upper_incomplete_gamma(s, x).unwrap(), g) < 1e-9, "s={s} x={x}");
    }
    for x in [0.1, 1.0, 7.0] {
        assert!(rel(upper_incomplete_gamma(1.0, x).unwrap(), (-x).exp()) < 1e-13);
    }
    assert!(upper_incomplete_gamma(1.0, 0.0).is_err());
}

#[test]
fn incomplete_gamma_small_x_limit() {
    let x = 1e-8;
    let ratio = upper_incomplete_gamma(-0.5, x).unwrap() / x.powf(-0.5);
    assert!((ratio - 2.0).abs() < 1e-3);
}

#[test]
fn k_function_limits() {
    // The Gauss–Hermite rule is accurate to about 2e-5 because of the kinks.
    assert!(rel(k_function_limit(), ABS_Z2M1_CUBED) < 5e-5);
    assert!(rel(k_function(f64::INFINITY, 3.0).unwrap(), 3.0 * ABS_Z2M1_CUBED) < 5e-5);
    assert!(rel(k_function(1.0, 1.0).unwrap(), K_AT_1) < 5e-5);
    assert!(rel(k_function(1e9, 1.0).unwrap(), ABS_Z2M1_CUBED) < 1e-3);
    // Continuity at zero: K(x) ≈ 8E|z|³·x^{3/2} near the origin, K(0) = 0.
    let (a, b) = (k_function(1e-6, 1.0).unwrap(), k_function(1e-8, 1.0).unwrap());
    assert_eq!(k_function(0.0, 1.0).unwrap(), 0.0);
    assert!(rel(a, 8.0 * 1.595_769_121_605_730_7 * 1e-9) < 1e-3);
    assert!(rel(b / a, 1e-3) < 1e-3);
    assert!(k_function(-1.0, 1.0).is_err());
}

#[test]
fn k_over_v32_small_x_limit() {
    // 8·E|z|³/((log₂e)³·2^{3/2})
    let lim = 8.0 * 1.595_769_121_605_730_7 / (LOG2_E.powi(3) * 2f64.powf(1.5));
    assert!(rel(k_over_v32(1e-10, 1.0).unwrap(), lim) < 1e-4);
}

#[test]
fn k_function_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400_000;
    for x in [0.5, 4.0, 50.0] {
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = (z * z - 2.0 * z / f64::sqrt(x) - 1.0).abs().powi(3) * (x / (1.0 + x)).powi(3);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let k = k_function(x, 1.0).unwrap();
        assert!((k - mean).abs() < 4.0 * se, "x={x}: K={k} mc={mean}±{se}");
    }
}

#[test]
fn mills_sandwich_on_log_grid() {
    for x in logspace(1e-3, 8.0, 2000) {
        let (lo, hi) = mills_bounds(x);
        let q = gaussian_q(x);
        assert!(lo <= q && q <= hi, "x={x}");
    }
}

proptest! {
    #[test]
    fn q_inv_roundtrip(lp in -300.0f64..-0.302) {
        let p = 10f64.powf(lp);
        let x = gaussian_q_inv(p).unwrap();
        prop_assert!(rel(gaussian_q(x), p) <= 1e-10);
    }

    #[test]
    fn q_decreasing(x in -40.0f64..40.0, dx in 1e-3f64..1.0) {
        // Strict where Q is not saturated at 1 or underflowing.
        if (-5.0..30.0).contains(&x) {
            prop_assert!(gaussian_q(x + dx) < gaussian_q(x));
        } else {
            prop_assert!(gaussian_q(x + dx) <= gaussian_q(x));
        }
    }

    #[test]
    fn lambert_identity_and_bounds(ly in 0.0f64..300.0) {
        let y = 10f64.powf(ly);
        let w = lambert_w0(y).unwrap();
        prop_assert!(rel(w * w.exp(), y) < 1e-12);
        if y > std::f64::consts::E {
            let (lo, hi) = lambert_w_bounds(y);
            prop_assert!(lo <= w * (1.0 + 1e-14) && w <= hi * (1.0 + 1e-14));
        }
    }

    #[test]
    fn q_inv_lambert_bracket(lp in -150.0f64..-0.302) {
        let v = 10f64.powf(lp);
        let x = gaussian_q_inv(v).unwrap();
        let w = lambert_w0(v.powi(-2) / (2.0 * std::f64::consts::PI)).unwrap().sqrt();
        prop_assert!(x > 0.0 && x <= w);
    }

    #[test]
    fn incomplete_gamma_lower_bound(s in prop_oneof![-5.0f64..1.0, 2.0f64..8.0], lx in -6.0f64..2.5) {
        let x = 10f64.powf(lx);
        let g = upper_incomplete_gamma(s, x).unwrap();
        prop_assert!(g >= (-x).exp() * (1.0 + x).powf(s - 1.0) * (1.0 - 1e-12));
    }

    #[test]
    fn k_scales_with_c0(lx in -4.0f64..6.0, c0 in 0.1f64..10.0) {
        let x = 10f64.powf(lx);
        prop_assert!(rel(k_function(x, c0).unwrap(), c0 * k_function(x, 1.0).unwrap()) < 1e-13);
    }
}
