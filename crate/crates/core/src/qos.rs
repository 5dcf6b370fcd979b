//! Effective bandwidth of the arrivals, effective capacity of the
//! finite-blocklength service, the QoS exponent where they meet, and the
//! queue-length and delay violation estimates that follow from it.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::fbc::{dispersion, FbcParams, RateCurve};
use crate::numerics::{bisect, integrate_pieces, log_add_exp, log_integrate_exp, log_sum_exp};
use crate::power::{Allocation, PowerPolicy};
use crate::specfun::gaussian_q;

/// I.i.d. per-slot arrival law (bits per slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Deterministic { bits: f64 },
    /// A packet of `bits` with probability `prob`, nothing otherwise.
    BernoulliPacket { bits: f64, prob: f64 },
    /// A Poisson number of bits with mean `rate`.
    PoissonBits { rate: f64 },
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidParam(s));
        match *self {
            ArrivalProcess::Deterministic { bits } if !(bits >= 0.0 && bits.is_finite()) => {
                bad(format!("deterministic arrival must be nonnegative, got {bits}"))
            }
            ArrivalProcess::BernoulliPacket { bits, prob }
                if !(bits > 0.0 && bits.is_finite()) || !(prob > 0.0 && prob <= 1.0) =>
            {
                bad(format!("Bernoulli arrival needs bits > 0 and prob in (0, 1], got {bits}, {prob}"))
            }
            ArrivalProcess::PoissonBits { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("Poisson rate must be positive, got {rate}"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ArrivalProcess::Deterministic { bits } => bits,
            ArrivalProcess::BernoulliPacket { bits, prob } => bits * prob,
            ArrivalProcess::PoissonBits { rate } => rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ArrivalProcess::Deterministic { .. } => 0.0,
            ArrivalProcess::BernoulliPacket { bits, prob } => bits * bits * prob * (1.0 - prob),
            ArrivalProcess::PoissonBits { rate } => rate,
        }
    }

    /// Largest possible arrival in one slot.
    pub fn peak(&self) -> f64 {
        match *self {
            ArrivalProcess::Deterministic { bits } => bits,
            ArrivalProcess::BernoulliPacket { bits, .. } => bits,
            ArrivalProcess::PoissonBits { .. } => f64::INFINITY,
        }
    }

    /// ln E{e^{θa}}.
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        let v = match *self {
            ArrivalProcess::Deterministic { bits } => theta * bits,
            ArrivalProcess::BernoulliPacket { bits, prob } => {
                let tb = theta * bits;
                if tb > 30.0 {
                    tb + (prob + (1.0 - prob) * (-tb).exp()).ln()
                } else {
                    (prob * tb.exp_m1()).ln_1p()
                }
            }
            ArrivalProcess::PoissonBits { rate } => rate * theta.exp_m1(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::DivergentMgf { theta })
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalProcess::Deterministic { bits } => bits,
            ArrivalProcess::BernoulliPacket { bits, prob } => {
                if rng.random::<f64>() < prob {
                    bits
                } else {
                    0.0
                }
            }
            ArrivalProcess::PoissonBits { rate } => Poisson::new(rate).expect("validated").sample(rng),
        }
    }
}

/// α_A(θ) = (1/θ)·ln E{e^{θa}}.
pub fn effective_bandwidth(arrival: &ArrivalProcess, theta: f64) -> Result<f64> {
    arrival.validate()?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain { what: "theta", value: theta });
    }
    Ok(arrival.log_mgf(theta)? / theta)
}

/// How an effective-capacity value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EcMethod {
    Exact,
    Quadrature,
    MonteCarlo,
    Laplace,
    LaplaceTruncated,
    LaplaceArq,
}

impl EcMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EcMethod::Exact => "exact",
            EcMethod::Quadrature => "quadrature",
            EcMethod::MonteCarlo => "montecarlo",
            EcMethod::Laplace => "laplace",
            EcMethod::LaplaceTruncated => "laplace_truncated",
            EcMethod::LaplaceArq => "laplace_arq",
        }
    }
}

/// An effective capacity in bits per slot with error metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EcEstimate {
    pub theta: f64,
    /// Bits per slot.
    pub value: f64,
    /// Bits per channel use (value / N).
    pub normalized: f64,
    pub method: EcMethod,
    /// Absolute error estimate in bits per slot: quadrature error bound,
    /// Monte Carlo standard error, or measured Laplace error when known.
    pub error: Option<f64>,
}

/// Everything that determines the per-slot service process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceContext {
    pub model: ChannelModel,
    pub policy: PowerPolicy,
    pub params: FbcParams,
    /// Simple ARQ: a frame delivers nothing with probability ε.
    pub arq: bool,
    #[serde(skip)]
    curve: RateCurve,
    #[serde(skip)]
    x_star: Option<f64>,
    #[serde(skip)]
    mean_rate: f64,
}

const QUAD_TOL: f64 = 1e-11;

impl ServiceContext {
    pub fn new(model: ChannelModel, policy: PowerPolicy, params: FbcParams, arq: bool) -> Result<Self> {
        model.validate()?;
        policy.validate()?;
        let curve = RateCurve::new(&params)?;
        let x_star = crate::laplace::solve_x_star_policy(&policy, &params).ok().filter(|x| *x > 0.0);
        let mut ctx = Self { model, policy, params, arq, curve, x_star, mean_rate: 0.0 };
        ctx.mean_rate = ctx.expected_rate()?;
        Ok(ctx)
    }

    /// Fixed-power service at the SNR in `params`.
    pub fn fixed(model: ChannelModel, params: FbcParams) -> Result<Self> {
        let policy = PowerPolicy::Fixed { snr: params.snr };
        Self::new(model, policy, params, false)
    }

    pub fn curve(&self) -> &RateCurve {
        &self.curve
    }

    pub fn blocklength(&self) -> f64 {
        self.params.blocklength
    }

    pub fn frame_slots(&self) -> f64 {
        self.model.frame_slots as f64
    }

    /// Bits delivered in a slot at gain x (before ARQ failures).
    #[inline]
    pub fn service_bits(&self, x: f64) -> f64 {
        self.params.blocklength * self.curve.r(&self.policy, x)
    }

    fn key_points(&self) -> Vec<f64> {
        let mut keys = Vec::new();
        if let Some(x) = self.x_star {
            keys.push(x.ln());
        }
        let c = self.policy.cutoff();
        if c > 0.0 {
            keys.push(c.ln());
        }
        if let Some((m, scale)) = self.model.gamma_shape_scale() {
            if m > 1.0 {
                keys.push(((m - 1.0) * scale).ln());
            }
            keys.push(scale.ln());
        }
        keys
    }

    /// ln-space window that holds the gain mass.
    fn mass_window(&self) -> (f64, f64) {
        let (lo, hi) = self.model.log_support();
        let n = 4000;
        let step = (hi - lo) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| self.model.ln_pdf((lo + step * i as f64).exp()) + lo + step * i as f64).collect();
        let vmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = vals.iter().position(|v| *v >= vmax - 48.0).unwrap_or(0);
        let last = vals.iter().rposition(|v| *v >= vmax - 48.0).unwrap_or(n);
        (lo + step * first.saturating_sub(1) as f64, lo + step * (last + 1).min(n) as f64)
    }

    fn pieces(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        pts.extend(self.key_points().into_iter().filter(|k| *k > lo && *k < hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// E{r(|h|²)} in bits per channel use.
    fn expected_rate(&self) -> Result<f64> {
        if let Some(atoms) = self.model.atoms() {
            return Ok(atoms.iter().map(|(g, p)| p * self.curve.r(&self.policy, *g)).sum());
        }
        let (lo, hi) = self.mass_window();
        let f = |t: f64| {
            let x = t.exp();
            (self.model.ln_pdf(x) + t).exp() * self.curve.r(&self.policy, x)
        };
        // E{r} can cancel to near zero at low SNR; the offset sets the scale.
        let res = integrate_pieces(f, &self.pieces(lo, hi), 1e-13, 1e-13 * self.curve.offset, 20_000)?;
        Ok(res.value)
    }

    /// E{s} in bits per slot, including ARQ losses.
    pub fn mean_service(&self) -> f64 {
        let s = self.params.blocklength * self.mean_rate;
        if self.arq {
            (1.0 - self.params.error_prob) * s
        } else {
            s
        }
    }

    /// ln E{exp(−λ·r(|h|²))} with λ = θTN, and a relative error estimate
    /// of the expectation (before the ARQ mixture).
    pub fn log_laplace_transform(&self, lambda: f64) -> Result<(f64, f64)> {
        if let Some(atoms) = self.model.atoms() {
            let terms: Vec<f64> = atoms.iter().map(|(g, p)| p.ln() - lambda * self.curve.r(&self.policy, *g)).collect();
            return Ok((log_sum_exp(&terms), 0.0));
        }
        let rbar = self.mean_rate;
        if lambda * rbar.abs().max(self.curve.offset) < 1.0 {
            // Small λ: integrate expm1 of the centred exponent so that the
            // O(λ²) correction keeps its relative accuracy.
            let (lo, hi) = self.mass_window();
            let f = |t: f64| {
                let x = t.exp();
                (self.model.ln_pdf(x) + t).exp() * (-lambda * (self.curve.r(&self.policy, x) - rbar)).exp_m1()
            };
            // The result is added to −λ·r̄, so accuracy is judged against that.
            let abs_tol = (1e-13 * lambda * rbar.abs().max(self.curve.offset)).max(1e-300);
            let res = integrate_pieces(f, &self.pieces(lo, hi), 1e-12, abs_tol, 20_000)?;
            let ln = -lambda * rbar + res.value.ln_1p();
            return Ok((ln, res.error / (1.0 + res.value)));
        }
        let (lo, hi) = self.model.log_support();
        let h = |t: f64| {
            let x = t.exp();
            self.model.ln_pdf(x) + t - lambda * self.curve.r(&self.policy, x)
        };
        log_integrate_exp(h, lo, hi, &self.key_points(), QUAD_TOL)
    }

    /// ln E{exp(−θT·s)} including the ARQ mixture.
    fn log_service_mgf(&self, theta: f64) -> Result<(f64, f64)> {
        let lambda = theta * self.frame_slots() * self.params.blocklength;
        let (l, rel) = self.log_laplace_transform(lambda)?;
        if self.arq {
            let eps = self.params.error_prob;
            Ok((log_add_exp(eps.ln(), (1.0 - eps).ln() + l), rel))
        } else {
            Ok((l, rel))
        }
    }

    /// α_S(θ) by quadrature (exact sum for point-mass laws).
    pub fn ec(&self, theta: f64) -> Result<EcEstimate> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain { what: "theta", value: theta });
        }
        let tt = theta * self.frame_slots();
        let (l, rel) = self.log_service_mgf(theta)?;
        let value = -l / tt;
        let method = if self.model.is_continuous() { EcMethod::Quadrature } else { EcMethod::Exact };
        Ok(EcEstimate {
            theta,
            value,
            normalized: value / self.params.blocklength,
            method,
            error: Some(rel / tt),
        })
    }
}

/// α_S(θ) = −(1/(θT))·ln E{e^{−θTN·r(|h|²)}} by adaptive quadrature.
pub fn effective_capacity_quadrature(
    model: &ChannelModel,
    policy: &PowerPolicy,
    params: &FbcParams,
    theta: f64,
) -> Result<EcEstimate> {
    ServiceContext::new(model.clone(), *policy, *params, false)?.ec(theta)
}

/// Monte Carlo estimate of α_S(θ) over `n_frames` gain draws, with the
/// delta-method standard error.
pub fn effective_capacity_montecarlo(ctx: &ServiceContext, theta: f64, n_frames: usize, seed: u64) -> Result<EcEstimate> {
    if n_frames < 10_000 {
        return Err(Error::InvalidParam(format!("Monte Carlo needs at least 1e4 frames, got {n_frames}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain { what: "theta", value: theta });
    }
    if ctx.model.atoms().map(|a| a.len()) == Some(1) && !ctx.arq {
        let mut e = ctx.ec(theta)?;
        e.method = EcMethod::MonteCarlo;
        e.error = Some(0.0);
        return Ok(e);
    }
    let tt = theta * ctx.frame_slots();
    let gains = ctx.model.sample_frames(n_frames, seed);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ 0x5eed_a59);
    let eps = ctx.params.error_prob;
    let y: Vec<f64> = gains
        .iter()
        .map(|&g| {
            let fail = ctx.arq && rng.random::<f64>() < eps;
            if fail {
                0.0
            } else {
                -tt * ctx.service_bits(g)
            }
        })
        .collect();
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = n_frames as f64;
    let w: Vec<f64> = y.iter().map(|v| (v - ymax).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let value = -(ymax + mean.ln()) / tt;
    let stderr = var.sqrt() / (n.sqrt() * mean) / tt;
    Ok(EcEstimate {
        theta,
        value,
        normalized: value / ctx.params.blocklength,
        method: EcMethod::MonteCarlo,
        error: Some(stderr),
    })
}

/// Root of α_A(θ) = α_S(θ), or no finite root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "theta", rename_all = "snake_case")]
pub enum QosExponent {
    Finite(f64),
    /// α_A stays below α_S on the whole bracket: tails vanish faster
    /// than any exponential.
    Unbounded,
}

impl QosExponent {
    pub fn finite(&self) -> Option<f64> {
        match self {
            QosExponent::Finite(t) => Some(*t),
            QosExponent::Unbounded => None,
        }
    }
}

/// Solves α_A(θ) = α_S(θ) by bisection on [θ_lo, θ_hi].
pub fn solve_qos_exponent(arrival: &ArrivalProcess, service: &ServiceContext, bracket: (f64, f64)) -> Result<QosExponent> {
    arrival.validate()?;
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParam(format!("bad theta bracket ({lo}, {hi})")));
    }
    let mu_a = arrival.mean();
    let mu_s = service.mean_service();
    if mu_a >= mu_s {
        return Err(Error::Unstable { mean_arrival: mu_a, mean_service: mu_s });
    }
    let gap = |theta: f64| -> Result<f64> { Ok(effective_bandwidth(arrival, theta)? - service.ec(theta)?.value) };
    let g_lo = gap(lo)?;
    let g_hi = gap(hi)?;
    if g_lo >= 0.0 {
        return Err(Error::NoSignChange { lo, hi, f_lo: g_lo, f_hi: g_hi });
    }
    if g_hi < 0.0 {
        return Ok(QosExponent::Unbounded);
    }
    let mut failure = None;
    let root = bisect(
        |t: f64| {
            let ln_t = t;
            match gap(ln_t.exp()) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        lo.ln(),
        hi.ln(),
        1e-14,
        300,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(QosExponent::Finite(root?.exp()))
}

/// Convention for the probability that the queue is non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BusyConvention {
    /// η = 1.
    #[default]
    HighLoad,
    /// η = min(μ_a/μ_s, 1).
    Utilization,
}

impl BusyConvention {
    pub fn eta(&self, mean_arrival: f64, mean_service: f64) -> f64 {
        match self {
            BusyConvention::HighLoad => 1.0,
            BusyConvention::Utilization => (mean_arrival / mean_service).min(1.0),
        }
    }
}

/// A solved QoS exponent with the thresholds it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QosState {
    pub theta: f64,
    pub blocklength: f64,
    /// Queue threshold L in bits.
    pub queue_threshold: f64,
    /// Delay bound D_max in slots.
    pub delay_bound: f64,
    /// η ∈ (0, 1].
    pub busy_prob: f64,
}

impl QosState {
    /// ϱ = θN.
    pub fn varrho(&self) -> f64 {
        self.theta * self.blocklength
    }
}

/// χ ≈ η·e^{−θL}.
pub fn qvp_estimate(state: &QosState) -> f64 {
    state.busy_prob * (-state.theta * state.queue_threshold).exp()
}

/// δ ≈ e^{−θ·α_A(θ)·D_max}.
pub fn dvp_estimate(state: &QosState, eb_at_theta: f64) -> f64 {
    (-state.theta * eb_at_theta * state.delay_bound).exp()
}

/// δ from the service side: exp((D_max/T)·ln E{exp(−ϱT·r(|h|²))}).
pub fn dvp_from_service(service: &ServiceContext, theta: f64, delay_bound: f64) -> Result<f64> {
    let (l, _) = service.log_service_mgf(theta)?;
    Ok((delay_bound / service.frame_slots() * l).exp())
}

/// Smallest ε for which an AWGN link at `params.snr` and blocklength N
/// still meets χ ≤ χ_th at queue threshold L (G ≡ 0). A value of 0 means
/// the bound is below the smallest positive double.
pub fn epsilon_chi_bound(params: &FbcParams, arrival: &ArrivalProcess, queue_threshold: f64, chi_th: f64) -> Result<f64> {
    arrival.validate()?;
    if !(params.blocklength >= 1.0) || !(params.snr > 0.0) {
        return Err(Error::InvalidParam("blocklength and snr must be valid".into()));
    }
    if !(chi_th > 0.0 && chi_th <= 1.0) {
        return Err(Error::Domain { what: "chi threshold", value: chi_th });
    }
    if !(queue_threshold > 0.0) {
        return Err(Error::Domain { what: "queue threshold", value: queue_threshold });
    }
    let theta = -chi_th.ln() / queue_threshold;
    let eb = if theta > 0.0 { effective_bandwidth(arrival, theta)? } else { arrival.mean() };
    let n = params.blocklength;
    let c = params.snr.ln_1p() * crate::specfun::LOG2_E;
    let arg = (n * c + 0.5 * n.log2() - eb) / (n * dispersion(params.snr)?).sqrt();
    if arg < 0.0 {
        return Err(Error::Infeasible(format!(
            "effective bandwidth {eb} exceeds the zero-penalty rate; required error probability exceeds 0.5"
        )));
    }
    Ok(gaussian_q(arg))
}

/// Effective bandwidth inverse: the θ where α_A(θ) = target, for
/// strictly increasing α_A.
pub fn effective_bandwidth_inverse(arrival: &ArrivalProcess, target: f64) -> Result<f64> {
    let mu = arrival.mean();
    if !(target > mu && target < arrival.peak()) {
        return Err(Error::Infeasible(format!("target {target} outside (mean {mu}, peak {})", arrival.peak())));
    }
    let mut hi = 1e-12;
    while effective_bandwidth(arrival, hi)? < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoConvergence { what: "effective bandwidth bracket", iterations: 80 });
        }
    }
    let f = |lt: f64| effective_bandwidth(arrival, lt.exp()).map(|v| v - target).unwrap_or(f64::NAN);
    Ok(bisect(f, (1e-300f64).ln(), hi.ln(), 1e-15, 400)?.exp())
}
