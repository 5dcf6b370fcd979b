//! Closed-form Laplace approximations of the effective capacity integral
//! around the gain x* that minimizes the rate function.

use serde::Serialize;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::fbc::{FbcParams, RateCurve, ZeroPowerRate};
use crate::numerics::{bisect, log_add_exp, logspace};
use crate::power::{check_admissible, Allocation, PowerPolicy};
use crate::qos::ServiceContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceVariant {
    Plain,
    Truncated,
    Arq,
}

/// Prefactor of the truncated-policy formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncPrefactor {
    /// −1/(θT), consistent with the capacity definition.
    #[default]
    PerFrame,
    /// −1/(θN), as typeset in the source formula.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceResult {
    pub theta: f64,
    pub x_star: f64,
    /// r(x*) in bits per channel use (may be negative for short blocks).
    pub r_at_star: f64,
    /// r″(x*) (positive at a proper minimum).
    pub r2_at_star: f64,
    /// Approximate α_S in bits per slot.
    pub ec_value: f64,
    pub normalized: f64,
    pub variant: LaplaceVariant,
    /// ec_value minus the quadrature value, when an oracle run was made.
    pub quadrature_error: Option<f64>,
}

/// Gain at which Ξ(x)x reaches u* = √((1+√(1+4ℓ))/2) − 1.
pub fn solve_x_star<A: Allocation + ?Sized>(policy: &A, params: &FbcParams) -> Result<f64> {
    let curve = RateCurve::new(params)?;
    x_star_for(policy, &curve)
}

fn x_star_for<A: Allocation + ?Sized>(policy: &A, curve: &RateCurve) -> Result<f64> {
    let target = curve.u_star();
    let u = |x: f64| policy.received(x).0;
    let lo = policy.cutoff();
    if target == 0.0 {
        return Ok(lo);
    }
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1e-12 };
    let mut doublings = 0;
    while u(hi) < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Degenerate(format!("received SNR never reaches {target}")));
        }
    }
    let grid: Vec<f64> = logspace(lo.max(hi * 1e-6), hi, 200);
    let adm = check_admissible(policy, &grid)?;
    if let Some((x, value)) = adm.first_violation {
        return Err(Error::NotAdmissible { x, value });
    }
    bisect(|x| u(x) - target, lo, hi, 0.0, 2000)
}

impl PowerPolicy {
    /// Exact inverse of u(x) = Ξ(x)x above the cutoff.
    pub fn inverse_received(&self, u: f64) -> f64 {
        match *self {
            PowerPolicy::Fixed { snr } => u / snr,
            PowerPolicy::WaterFilling { nu0, gbar } => nu0 * (u + 1.0 / gbar),
            PowerPolicy::TangZhang { a1, a2, snr } => {
                let p = 1.0 / (a2 + 1.0);
                let c = a1.powf(p) * snr.powf(a2 * p);
                (c * (u + 1.0 / snr)).powf(a2 + 1.0)
            }
        }
    }
}

/// x* for the closed-form policies (exact inverse, no iteration).
pub fn solve_x_star_policy(policy: &PowerPolicy, params: &FbcParams) -> Result<f64> {
    policy.validate()?;
    let curve = RateCurve::new(params)?;
    let u = curve.u_star();
    if u == 0.0 {
        return Ok(policy.cutoff());
    }
    Ok(policy.inverse_received(u))
}

/// g′(x) = −r′(x), which vanishes at x*.
pub fn stationarity_residual<A: Allocation + ?Sized>(policy: &A, params: &FbcParams, x: f64) -> Result<f64> {
    let curve = RateCurve::new(params)?;
    Ok(-curve.r_derivs(policy, x).1)
}

struct Core {
    x_star: f64,
    r_star: f64,
    r2: f64,
    /// ln of √(2π/(λ r″))·f(x*)·e^{−λ r(x*)}.
    ln_l: f64,
}

fn core(model: &ChannelModel, policy: &PowerPolicy, params: &FbcParams, theta: f64) -> Result<Core> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain { what: "theta", value: theta });
    }
    model.validate()?;
    if !model.is_continuous() {
        return Err(Error::Degenerate("Laplace approximation needs a continuous gain density".into()));
    }
    let curve = RateCurve::new(params)?;
    let x_star = solve_x_star_policy(policy, params)?;
    let ln_f = model.ln_pdf(x_star);
    if !(ln_f > f64::NEG_INFINITY) || x_star <= 0.0 {
        return Err(Error::DensityZero { x: x_star });
    }
    let (r_star, _, r2) = curve.r_derivs(policy, x_star);
    if !(r2 > 0.0) {
        return Err(Error::Curvature { r2 });
    }
    let lambda = theta * model.frame_slots as f64 * params.blocklength;
    let ln_l = 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (lambda * r2).ln() + ln_f - lambda * r_star;
    Ok(Core { x_star, r_star, r2, ln_l })
}

fn finish(core: Core, theta: f64, ec_value: f64, n: f64, variant: LaplaceVariant) -> LaplaceResult {
    LaplaceResult {
        theta,
        x_star: core.x_star,
        r_at_star: core.r_star,
        r2_at_star: core.r2,
        ec_value,
        normalized: ec_value / n,
        variant,
        quadrature_error: None,
    }
}

/// α_S ≈ N·r(x*) − [ln f(x*) + ½ln 2π − ½ln r″(x*) − ½ln(θNT)]/(θT).
pub fn ec_laplace(model: &ChannelModel, policy: &PowerPolicy, params: &FbcParams, theta: f64) -> Result<LaplaceResult> {
    let c = core(model, policy, params, theta)?;
    let tt = theta * model.frame_slots as f64;
    let value = -c.ln_l / tt;
    Ok(finish(c, theta, value, params.blocklength, LaplaceVariant::Plain))
}

/// Laplace term plus the mass below the policy cutoff, where a fixed
/// (zero-power) rate is credited.
pub fn ec_laplace_truncated(
    model: &ChannelModel,
    policy: &PowerPolicy,
    params: &FbcParams,
    theta: f64,
    prefactor: TruncPrefactor,
) -> Result<LaplaceResult> {
    let c = core(model, policy, params, theta)?;
    let t = model.frame_slots as f64;
    let n = params.blocklength;
    let h_th = policy.cutoff();
    let ln_cdf = model.cdf(h_th)?.ln();
    let below = match params.zero_power_rate {
        ZeroPowerRate::NormalApprox => -theta * t * 0.5 * n.log2(),
        ZeroPowerRate::Zero => 0.0,
    };
    let ln_total = log_add_exp(below + ln_cdf, c.ln_l);
    let scale = match prefactor {
        TruncPrefactor::PerFrame => theta * t,
        TruncPrefactor::AsPrinted => theta * n,
    };
    Ok(finish(c, theta, -ln_total / scale, n, LaplaceVariant::Truncated))
}

/// ln(p + (1−p)·e^{ln_l}).
pub(crate) fn arq_mix(ln_l: f64, p: f64) -> f64 {
    log_add_exp(p.ln(), (1.0 - p).ln() + ln_l)
}

/// α_S ≈ −(1/(θT))·ln(ε + (1−ε)·√(2π/(θNT r″))·f(x*)·e^{−θNT r(x*)}).
pub fn ec_laplace_arq(model: &ChannelModel, policy: &PowerPolicy, params: &FbcParams, theta: f64) -> Result<LaplaceResult> {
    ec_laplace_arq_with(model, policy, params, theta, params.error_prob)
}

/// ARQ form with an explicit retransmission probability.
pub fn ec_laplace_arq_with(
    model: &ChannelModel,
    policy: &PowerPolicy,
    params: &FbcParams,
    theta: f64,
    retx_prob: f64,
) -> Result<LaplaceResult> {
    if !(0.0..1.0).contains(&retx_prob) {
        return Err(Error::Domain { what: "retransmission probability", value: retx_prob });
    }
    let c = core(model, policy, params, theta)?;
    let tt = theta * model.frame_slots as f64;
    let value = -arq_mix(c.ln_l, retx_prob) / tt;
    Ok(finish(c, theta, value, params.blocklength, LaplaceVariant::Arq))
}

/// Fills `quadrature_error` against the matching quadrature value.
pub fn attach_oracle(mut res: LaplaceResult, ctx: &ServiceContext) -> Result<LaplaceResult> {
    let exact = ctx.ec(res.theta)?;
    res.quadrature_error = Some(res.ec_value - exact.value);
    Ok(res)
}
