//! Normal approximation of the finite-blocklength coding rate, the rate
//! function r(x) under a power policy, and bounds on the remainder term.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::power::Allocation;
use crate::specfun::{gaussian_q_inv, gaussian_q_inv_derivative, k_function, k_over_v32, LOG2_E};

/// Rate credited at gains where the policy transmits nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPowerRate {
    /// The formula's value at zero SNR, (log₂N)/(2N) per channel use.
    #[default]
    NormalApprox,
    /// No bits at all.
    Zero,
}

/// Blocklength, error probability and transmit SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FbcParams {
    /// Channel uses per block (≥ 1; may be fractional in schedule sweeps).
    pub blocklength: f64,
    /// Block error probability in (0, 0.5].
    pub error_prob: f64,
    /// Linear transmit SNR.
    pub snr: f64,
    pub zero_power_rate: ZeroPowerRate,
}

impl FbcParams {
    pub fn new(blocklength: f64, error_prob: f64, snr: f64) -> Result<Self> {
        let p = Self { blocklength, error_prob, snr, zero_power_rate: ZeroPowerRate::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blocklength >= 1.0 && self.blocklength.is_finite()) {
            return Err(Error::Domain { what: "blocklength", value: self.blocklength });
        }
        if !(self.error_prob > 0.0 && self.error_prob <= 0.5) {
            return Err(Error::Domain { what: "error probability", value: self.error_prob });
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Domain { what: "snr", value: self.snr });
        }
        Ok(())
    }

    /// ℓ = (Q⁻¹(ε)/√N)².
    pub fn ell(&self) -> Result<f64> {
        let q = gaussian_q_inv(self.error_prob)?;
        Ok(q * q / self.blocklength)
    }
}

/// Coded bits in one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateValue {
    pub bits_per_channel_use: f64,
    pub total_bits: f64,
}

/// V(u) = (log₂e)²·(1 − (1+u)⁻²).
pub fn dispersion(snr_eff: f64) -> Result<f64> {
    if !(snr_eff >= 0.0) {
        return Err(Error::Domain { what: "effective snr", value: snr_eff });
    }
    if snr_eff.is_infinite() {
        return Ok(LOG2_E * LOG2_E);
    }
    // The product form avoids cancellation at small u; 1 − w² is exactly
    // monotone in floating point, which matters for u large.
    let shape = if snr_eff < 1.0 {
        snr_eff * (2.0 + snr_eff) / ((1.0 + snr_eff) * (1.0 + snr_eff))
    } else {
        let w = 1.0 / (1.0 + snr_eff);
        1.0 - w * w
    };
    Ok(LOG2_E * LOG2_E * shape)
}

/// Per-channel-use rate as a function of the received SNR u, with the
/// constants of a parameter set folded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCurve {
    pub blocklength: f64,
    /// Q⁻¹(ε)/√N.
    pub k: f64,
    /// (log₂N)/(2N).
    pub offset: f64,
    pub zero_power_rate: ZeroPowerRate,
}

impl RateCurve {
    pub fn new(params: &FbcParams) -> Result<Self> {
        params.validate()?;
        let n = params.blocklength;
        Ok(Self {
            blocklength: n,
            k: gaussian_q_inv(params.error_prob)? / n.sqrt(),
            offset: n.log2() / (2.0 * n),
            zero_power_rate: params.zero_power_rate,
        })
    }

    /// log₂(1+u) − log₂e·k·√(1−(1+u)⁻²) + (log₂N)/(2N).
    #[inline]
    pub fn per_use(&self, u: f64) -> f64 {
        let a = 1.0 + u;
        LOG2_E * (u.ln_1p() - self.k * (u * (2.0 + u)).sqrt() / a) + self.offset
    }

    /// d/du of [`per_use`](Self::per_use).
    #[inline]
    pub fn d1(&self, u: f64) -> f64 {
        let a = 1.0 + u;
        let w = u * (2.0 + u);
        LOG2_E * (1.0 / a - self.k / (a * a * w.sqrt()))
    }

    /// d²/du² of [`per_use`](Self::per_use).
    #[inline]
    pub fn d2(&self, u: f64) -> f64 {
        let a = 1.0 + u;
        let w = u * (2.0 + u);
        let sw = w.sqrt();
        LOG2_E * (-1.0 / (a * a) + self.k * (2.0 / (a * a * a * sw) + 1.0 / (a * w * sw)))
    }

    /// Received SNR that minimizes the rate: √((1+√(1+4ℓ))/2) − 1.
    pub fn u_star(&self) -> f64 {
        let ell = self.k * self.k;
        let w = 4.0 * ell / (1.0 + (1.0 + 4.0 * ell).sqrt());
        let d = 0.5 * w;
        d / ((1.0 + d).sqrt() + 1.0)
    }

    /// r(x) under a policy, honouring the zero-power convention.
    #[inline]
    pub fn r<A: Allocation + ?Sized>(&self, policy: &A, x: f64) -> f64 {
        let xi = policy.snr(x);
        if xi <= 0.0 && self.zero_power_rate == ZeroPowerRate::Zero {
            return 0.0;
        }
        self.per_use(xi * x)
    }

    /// (r, r′, r″) at gain x by the chain rule through u(x) = Ξ(x)x.
    pub fn r_derivs<A: Allocation + ?Sized>(&self, policy: &A, x: f64) -> (f64, f64, f64) {
        let (u, u1, u2) = policy.received(x);
        let (d1, d2) = (self.d1(u), self.d2(u));
        (self.r(policy, x), d1 * u1, d2 * u1 * u1 + d1 * u2)
    }
}

/// Normal approximation N·log₂(1+gγ) − √(N·V(gγ))·Q⁻¹(ε) + (log₂N)/2.
pub fn normal_approx_rate(params: &FbcParams, gain: f64) -> Result<RateValue> {
    if !(gain >= 0.0) {
        return Err(Error::Domain { what: "gain", value: gain });
    }
    params.validate()?;
    let n = params.blocklength;
    let u = gain * params.snr;
    let total = n * u.ln_1p() * LOG2_E - (n * dispersion(u)?).sqrt() * gaussian_q_inv(params.error_prob)? + 0.5 * n.log2();
    Ok(RateValue { bits_per_channel_use: total / n, total_bits: total })
}

/// r(x) in bits per channel use.
pub fn rate_function_r<A: Allocation + ?Sized>(x: f64, policy: &A, params: &FbcParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain { what: "gain", value: x });
    }
    Ok(RateCurve::new(params)?.r(policy, x))
}

/// Constants for [`g_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBoundConstants {
    pub c0: f64,
    pub c2: f64,
}

impl Default for GBoundConstants {
    fn default() -> Self {
        Self { c0: 1.0, c2: 1.0 }
    }
}

/// Lower and upper bounds of the remainder G, with the blocklength
/// thresholds they require.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBounds {
    pub lower: f64,
    pub upper: f64,
    pub threshold_upper: f64,
    pub threshold_lower: f64,
    pub b1: f64,
    pub c1: f64,
}

const C1_GRID: usize = 10_000;

/// Bounds g_l(N, gγ, ε) and g_u(gγ, ε) on the remainder of the normal
/// approximation.
pub fn g_bounds(params: &FbcParams, gain: f64, consts: GBoundConstants) -> Result<GBounds> {
    params.validate()?;
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Domain { what: "gain", value: gain });
    }
    if !(consts.c0 > 0.0) || !(consts.c2 > 0.0) {
        return Err(Error::InvalidParam("c0 and c2 must be positive".into()));
    }
    let eps = params.error_prob;
    let n = params.blocklength;
    let u = gain * params.snr;
    let v = dispersion(u)?;
    let k = k_function(u, consts.c0)?;
    let ratio = k_over_v32(u, consts.c0)?;
    let threshold_upper = (2.0 * ratio / (1.0 - eps)).powi(2);
    let threshold_lower = (2.0 * ratio / eps).powi(2);
    if !(n > threshold_upper) {
        return Err(Error::Threshold { which: "upper bound (1-eps)", required: threshold_upper, actual: n });
    }
    if !(n > threshold_lower) {
        return Err(Error::Threshold { which: "lower bound (eps)", required: threshold_lower, actual: n });
    }
    let b1 = 2.0 * ratio / ((2.0 * ratio / (1.0 - eps)).powi(2) + 1.0).sqrt();
    let (ya, yb) = (1.0 - eps - b1, 1.0 - eps);
    let mut dmin = f64::INFINITY;
    for i in 0..=C1_GRID {
        let y = ya + (yb - ya) * i as f64 / C1_GRID as f64;
        if y > 0.0 && y < 1.0 {
            dmin = dmin.min(gaussian_q_inv_derivative(y)?);
        }
    }
    let c1 = -2.0 * k * dmin;
    let upper = c1 / v + 1.5 * v.log2() - k.log2();
    let delta = 2.0 * ratio / n.sqrt();
    let lower = -0.5 * n.log2() + (ratio / consts.c2).log2()
        - (2.0 * (std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI).sqrt() + 2.0 * ratio)).log2()
        + (n * v).sqrt() * (gaussian_q_inv(eps)? - gaussian_q_inv(eps - delta)?);
    Ok(GBounds { lower, upper, threshold_upper, threshold_lower, b1, c1 })
}
