use fbl_qos::numerics::{integrate_pieces, logspace};
use fbl_qos::qos::*;
use fbl_qos::{ChannelModel, Error, FbcParams, PowerPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rayleigh_ctx(n: f64, t: u32) -> ServiceContext {
    let m = ChannelModel::rayleigh().with_frame_slots(t).unwrap();
    ServiceContext::new(m, PowerPolicy::Fixed { snr: 10.0 }, FbcParams::new(n, 1e-3, 10.0).unwrap(), false).unwrap()
}

#[test]
fn effective_bandwidth_examples() {
    let d = ArrivalProcess::Deterministic { bits: 37.0 };
    for th in [1e-6, 0.1, 3.0] {
        assert!((effective_bandwidth(&d, th).unwrap() - 37.0).abs() < 1e-12);
    }
    let b = ArrivalProcess::BernoulliPacket { bits: 100.0, prob: 0.5 };
    let expect = (0.5 + 0.5 * 1f64.exp()).ln() / 0.01;
    assert!((effective_bandwidth(&b, 0.01).unwrap() - expect).abs() < 1e-10);
    assert!((expect - 62.01).abs() < 0.01);
    for a in [b, ArrivalProcess::PoissonBits { rate: 40.0 }] {
        // Relative: the first correction is θσ²/2, already 1.25e-5 bits here.
        assert!(((effective_bandwidth(&a, 1e-8).unwrap() - a.mean()) / a.mean()).abs() < 1e-6);
    }
    assert!(effective_bandwidth(&b, 0.0).is_err());
}

#[test]
fn effective_bandwidth_matches_sampled_mgf() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let theta = 0.01;
    for a in [ArrivalProcess::BernoulliPacket { bits: 100.0, prob: 0.5 }, ArrivalProcess::PoissonBits { rate: 80.0 }] {
        let n = 2_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = (theta * a.sample(&mut rng)).exp();
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt() / mean / theta;
        let mc = mean.ln() / theta;
        assert!((mc - effective_bandwidth(&a, theta).unwrap()).abs() < 4.0 * se, "{a:?}");
    }
}

#[test]
fn awgn_capacity_is_exact_and_theta_free() {
    let p = FbcParams::new(512.0, 1e-5, 10.0).unwrap();
    let ctx = ServiceContext::fixed(ChannelModel::awgn(), p).unwrap();
    let nr = fbl_qos::fbc::normal_approx_rate(&p, 1.0).unwrap().total_bits;
    for th in [1e-6, 1e-3, 0.5, 10.0] {
        let e = ctx.ec(th).unwrap();
        assert!((e.value - nr).abs() < 1e-9 * nr);
        assert_eq!(e.method, EcMethod::Exact);
    }
    let mc = effective_capacity_montecarlo(&ctx, 0.01, 10_000, 3).unwrap();
    assert_eq!(mc.value, ctx.ec(0.01).unwrap().value);
    assert_eq!(mc.error, Some(0.0));
}

#[test]
fn small_theta_gives_mean_rate() {
    for ctx in [rayleigh_ctx(500.0, 1), rayleigh_ctx(100.0, 5)] {
        let e = ctx.ec(1e-9).unwrap().value;
        let mean = ctx.mean_service();
        assert!(((e - mean) / mean).abs() < 1e-4);
    }
}

#[test]
fn quadrature_against_independent_integration() {
    // Direct GK integration of the defining integral in linear x.
    let ctx = rayleigh_ctx(500.0, 5);
    for th in [1e-4, 1e-3, 0.01] {
        let lam = th * 5.0 * 500.0;
        let r = |x: f64| ctx.service_bits(x) / 500.0;
        let f = |x: f64| (-lam * r(x) - x).exp();
        let pts = [0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 60.0];
        let q = integrate_pieces(f, &pts, 1e-12, 0.0, 10_000).unwrap();
        let direct = -q.value.ln() / (th * 5.0);
        let e = ctx.ec(th).unwrap().value;
        assert!(((e - direct) / direct).abs() < 1e-8, "θ={th}: {e} vs {direct}");
    }
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let ctx = rayleigh_ctx(500.0, 5);
    let q = ctx.ec(0.001).unwrap().value;
    let mc = effective_capacity_montecarlo(&ctx, 0.001, 10_000_000, 2024).unwrap();
    assert!((mc.value - q).abs() < 3.0 * mc.error.unwrap());
    assert_eq!(mc.method, EcMethod::MonteCarlo);
    assert!(effective_capacity_montecarlo(&ctx, 0.001, 9_999, 1).is_err());
}

#[test]
fn monte_carlo_is_seeded_and_scales() {
    let ctx = rayleigh_ctx(500.0, 1);
    let a = effective_capacity_montecarlo(&ctx, 0.002, 100_000, 5).unwrap();
    let b = effective_capacity_montecarlo(&ctx, 0.002, 100_000, 5).unwrap();
    assert_eq!(a, b);
    let big = effective_capacity_montecarlo(&ctx, 0.002, 200_000, 5).unwrap();
    let ratio = (a.error.unwrap() / big.error.unwrap()).powi(2);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn arq_capacity_matches_mixture() {
    let m = ChannelModel::rayleigh().with_frame_slots(5).unwrap();
    let p = FbcParams::new(500.0, 1e-2, 10.0).unwrap();
    let plain = ServiceContext::new(m.clone(), PowerPolicy::Fixed { snr: 10.0 }, p, false).unwrap();
    let arq = ServiceContext::new(m, PowerPolicy::Fixed { snr: 10.0 }, p, true).unwrap();
    let th = 0.01;
    let tt = th * 5.0;
    let e = (-plain.ec(th).unwrap().value * tt).exp();
    let expect = -(0.01 + 0.99 * e).ln() / tt;
    assert!((arq.ec(th).unwrap().value - expect).abs() < 1e-9 * expect);
    let mc = effective_capacity_montecarlo(&arq, th, 2_000_000, 9).unwrap();
    assert!((mc.value - expect).abs() < 3.0 * mc.error.unwrap());
}

#[test]
fn qos_exponent_examples() {
    let ctx = ServiceContext::fixed(ChannelModel::awgn(), FbcParams::new(512.0, 1e-5, 10.0).unwrap()).unwrap();
    let s = ctx.mean_service();
    let d = ArrivalProcess::Deterministic { bits: 0.9 * s };
    assert_eq!(solve_qos_exponent(&d, &ctx, (1e-9, 10.0)).unwrap(), QosExponent::Unbounded);
    let too_much = ArrivalProcess::Deterministic { bits: s };
    assert!(matches!(solve_qos_exponent(&too_much, &ctx, (1e-9, 10.0)), Err(Error::Unstable { .. })));

    let ray = rayleigh_ctx(500.0, 1);
    let a = ArrivalProcess::BernoulliPacket { bits: 2.0 * 0.9 * ray.mean_service(), prob: 0.5 };
    let th = solve_qos_exponent(&a, &ray, (1e-9, 1.0)).unwrap().finite().unwrap();
    let eb = effective_bandwidth(&a, th).unwrap();
    let ec = ray.ec(th).unwrap().value;
    assert!((eb - ec).abs() <= 1e-9 * ec);
    assert!(solve_qos_exponent(&a, &ray, (0.0, 1.0)).is_err());
}

#[test]
fn qvp_and_dvp_estimates() {
    let s = QosState { theta: 0.01, blocklength: 100.0, queue_threshold: 1000.0, delay_bound: 0.0, busy_prob: 1.0 };
    assert!((qvp_estimate(&s) - (-10f64).exp()).abs() < 1e-18);
    assert!((s.varrho() - 1.0).abs() < 1e-15);
    let zero = QosState { queue_threshold: 0.0, busy_prob: 0.3, ..s };
    assert_eq!(qvp_estimate(&zero), 0.3);
    assert_eq!(BusyConvention::HighLoad.eta(3.0, 4.0), 1.0);
    assert_eq!(BusyConvention::Utilization.eta(3.0, 4.0), 0.75);
}

#[test]
fn dvp_forms_agree_at_the_solved_exponent() {
    for t in [1u32, 5] {
        let ray = rayleigh_ctx(500.0, t);
        let a = ArrivalProcess::PoissonBits { rate: 0.9 * ray.mean_service() };
        let th = solve_qos_exponent(&a, &ray, (1e-9, 1.0)).unwrap().finite().unwrap();
        let eb = effective_bandwidth(&a, th).unwrap();
        for d in [5.0, 20.0, 50.0] {
            let s = QosState { theta: th, blocklength: 500.0, queue_threshold: 0.0, delay_bound: d, busy_prob: 1.0 };
            let via_eb = dvp_estimate(&s, eb);
            let via_service = dvp_from_service(&ray, th, d).unwrap();
            assert!(((via_eb - via_service) / via_service).abs() < 1e-12 * d.max(1.0) * 100.0, "T={t} d={d}");
        }
    }
}

#[test]
fn epsilon_chi_examples() {
    let p = FbcParams::new(512.0, 1e-3, 10.0).unwrap();
    let a = ArrivalProcess::PoissonBits { rate: 1200.0 };
    let c = 512.0 * 11f64.log2() + 4.5;
    let v = fbl_qos::fbc::dispersion(10.0).unwrap();
    let q = fbl_qos::specfun::gaussian_q((c - 1200.0) / (512.0 * v).sqrt());
    assert!((epsilon_chi_bound(&p, &a, 1e4, 1.0).unwrap() - q).abs() < 1e-12 * q);
    assert!((epsilon_chi_bound(&p, &a, 1e12, 1e-6).unwrap() - q).abs() < 1e-6 * q);
    let greedy = ArrivalProcess::Deterministic { bits: 2000.0 };
    assert!(matches!(epsilon_chi_bound(&p, &greedy, 1e4, 1e-3), Err(Error::Infeasible(_))));
    assert!(epsilon_chi_bound(&p, &a, 1e4, 0.0).is_err());

    // Round trip through the solver.
    let p = FbcParams::new(512.0, 0.1, 10.0).unwrap();
    let d = ArrivalProcess::Deterministic { bits: 0.8 * 512.0 * 11f64.log2() };
    let eps = epsilon_chi_bound(&p, &d, 1e4, 1e-6).unwrap();
    let ctx = ServiceContext::fixed(ChannelModel::awgn(), FbcParams::new(512.0, eps * (1.0 + 1e-4), 10.0).unwrap()).unwrap();
    assert_eq!(solve_qos_exponent(&d, &ctx, (1e-9, 1.0)).unwrap(), QosExponent::Unbounded);
}

#[test]
fn jensen_bound_and_theta_monotonicity() {
    let ctx = rayleigh_ctx(500.0, 1);
    let mean = ctx.mean_service();
    let thetas = logspace(1e-5, 1e-2, 16);
    let ecs: Vec<f64> = thetas.iter().map(|&t| ctx.ec(t).unwrap().value).collect();
    for w in ecs.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(ecs.iter().all(|&e| e <= mean));
    let a = ArrivalProcess::BernoulliPacket { bits: 800.0, prob: 0.3 };
    let ebs: Vec<f64> = thetas.iter().map(|&t| effective_bandwidth(&a, t).unwrap()).collect();
    for w in ebs.windows(2) {
        assert!(w[1] >= w[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dvp_monotone(th in 1e-4f64..0.1, eb in 10.0f64..5000.0, d in 0.0f64..100.0, dd in 0.1f64..10.0) {
        let s = QosState { theta: th, blocklength: 100.0, queue_threshold: 0.0, delay_bound: d, busy_prob: 1.0 };
        let later = QosState { delay_bound: d + dd, ..s };
        let harder = QosState { theta: th * 1.5, ..s };
        prop_assert!(dvp_estimate(&later, eb) <= dvp_estimate(&s, eb));
        prop_assert!(dvp_estimate(&harder, eb) <= dvp_estimate(&s, eb));
    }

    #[test]
    fn epsilon_chi_monotone(lc in -12.0f64..-0.5, factor in 1.5f64..100.0, rate in 1000.0f64..1500.0) {
        let p = FbcParams::new(512.0, 1e-3, 10.0).unwrap();
        let a = ArrivalProcess::PoissonBits { rate };
        let chi = 10f64.powf(lc);
        let tight = epsilon_chi_bound(&p, &a, 2e4, chi).unwrap();
        let loose = epsilon_chi_bound(&p, &a, 2e4, (chi * factor).min(1.0)).unwrap();
        prop_assert!(loose <= tight);
    }

    #[test]
    fn ec_below_mean_for_random_configs(n in 50.0f64..2000.0, leps in -6.0f64..-1.0, lsnr in -1.0f64..3.0, lt in -5.0f64..-1.0, m in 0.5f64..4.0) {
        let model = ChannelModel::nakagami(m, 1.0).unwrap();
        let snr = 10f64.powf(lsnr);
        let ctx = ServiceContext::fixed(model, FbcParams::new(n.round(), 10f64.powf(leps), snr).unwrap()).unwrap();
        let e = ctx.ec(10f64.powf(lt)).unwrap().value;
        prop_assert!(e <= ctx.mean_service() * (1.0 + 1e-9) + 1e-9);
        // Jensen: E{log₂(1 + γx)} ≤ log₂(1 + γE{x}).
        let cap = n.round() * snr.ln_1p() * fbl_qos::specfun::LOG2_E + 0.5 * n.round().log2();
        prop_assert!(e <= cap + 1e-6);
    }
}
