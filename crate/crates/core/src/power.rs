//! Gain-dependent power allocation Ξ(x) and its admissibility check.

use serde::Serialize;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::numerics::{bisect, log_integrate_exp};

/// A transmit-SNR rule as a function of the channel gain.
pub trait Allocation: Sync {
    /// Ξ(x), the transmit SNR at gain x.
    fn snr(&self, x: f64) -> f64;

    /// Gain below which no power is spent.
    fn cutoff(&self) -> f64 {
        0.0
    }

    /// u(x) = Ξ(x)·x with u′ and u″. The default uses central differences.
    fn received(&self, x: f64) -> (f64, f64, f64) {
        let u = |y: f64| self.snr(y) * y;
        let h = 1e-4 * x.abs().max(1e-12);
        let (um, u0, up) = (u(x - h), u(x), u(x + h));
        (u0, (up - um) / (2.0 * h), (up - 2.0 * u0 + um) / (h * h))
    }
}

impl<F: Fn(f64) -> f64 + Sync> Allocation for F {
    fn snr(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Closed-form policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerPolicy {
    /// Ξ(x) = snr.
    Fixed { snr: f64 },
    /// Ξ(x) = (1/ν₀ − 1/(γ̄x))⁺, cutoff ν₀/γ̄.
    WaterFilling { nu0: f64, gbar: f64 },
    /// Ξ(x) = 1/(a₁^{1/(a₂+1)}(γx)^{a₂/(a₂+1)}) − 1/(γx) above a₁/γ, else 0.
    TangZhang { a1: f64, a2: f64, snr: f64 },
}

impl PowerPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPolicy(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            PowerPolicy::Fixed { snr } => ok("snr", snr),
            PowerPolicy::WaterFilling { nu0, gbar } => ok("nu0", nu0).and(ok("gbar", gbar)),
            PowerPolicy::TangZhang { a1, a2, snr } => ok("a1", a1).and(ok("a2", a2)).and(ok("snr", snr)),
        }
    }

    /// Ξ(x) with validation.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if !(x >= 0.0) {
            return Err(Error::Domain { what: "gain", value: x });
        }
        Ok(self.snr(x))
    }

    fn tz_coeffs(a1: f64, a2: f64, snr: f64) -> (f64, f64) {
        let p = 1.0 / (a2 + 1.0);
        let c = a1.powf(p) * snr.powf(a2 * p);
        (p, c)
    }
}

impl Allocation for PowerPolicy {
    fn snr(&self, x: f64) -> f64 {
        match *self {
            PowerPolicy::Fixed { snr } => snr,
            PowerPolicy::WaterFilling { nu0, gbar } => {
                if x <= nu0 / gbar {
                    0.0
                } else {
                    (1.0 / nu0 - 1.0 / (gbar * x)).max(0.0)
                }
            }
            PowerPolicy::TangZhang { a1, a2, snr } => {
                if x <= a1 / snr {
                    0.0
                } else {
                    let (p, c) = Self::tz_coeffs(a1, a2, snr);
                    (x.powf(p - 1.0) / c - 1.0 / (snr * x)).max(0.0)
                }
            }
        }
    }

    fn cutoff(&self) -> f64 {
        match *self {
            PowerPolicy::Fixed { .. } => 0.0,
            PowerPolicy::WaterFilling { nu0, gbar } => nu0 / gbar,
            PowerPolicy::TangZhang { a1, snr, .. } => a1 / snr,
        }
    }

    fn received(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            PowerPolicy::Fixed { snr } => (snr * x, snr, 0.0),
            PowerPolicy::WaterFilling { nu0, gbar } => {
                if x <= nu0 / gbar {
                    (0.0, 0.0, 0.0)
                } else {
                    (x / nu0 - 1.0 / gbar, 1.0 / nu0, 0.0)
                }
            }
            PowerPolicy::TangZhang { a1, a2, snr } => {
                if x <= a1 / snr {
                    (0.0, 0.0, 0.0)
                } else {
                    let (p, c) = Self::tz_coeffs(a1, a2, snr);
                    let xp = x.powf(p);
                    ((xp / c - 1.0 / snr).max(0.0), p * xp / (c * x), p * (p - 1.0) * xp / (c * x * x))
                }
            }
        }
    }
}

/// Result of [`check_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// First grid point where Ξ + Ξ′x < −1e−9, with that value.
    pub first_violation: Option<(f64, f64)>,
}

/// Checks Ξ(x) + Ξ′(x)·x ≥ −1e−9 on a strictly increasing positive grid,
/// with Ξ′ from central differences at relative step 1e−6.
pub fn check_admissible<A: Allocation + ?Sized>(policy: &A, grid: &[f64]) -> Result<Admissibility> {
    if grid.iter().any(|&x| !(x > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParam("admissibility grid must be positive and strictly increasing".into()));
    }
    for &x in grid {
        let h = 1e-6 * x;
        let d = (policy.snr(x + h) - policy.snr(x - h)) / (2.0 * h);
        let v = policy.snr(x) + d * x;
        if v < -1e-9 {
            return Ok(Admissibility { admissible: false, first_violation: Some((x, v)) });
        }
    }
    Ok(Admissibility { admissible: true, first_violation: None })
}

/// E{Ξ(|h|²)} under the given gain law.
pub fn average_snr<A: Allocation + ?Sized>(policy: &A, model: &ChannelModel) -> Result<f64> {
    if let Some(atoms) = model.atoms() {
        return Ok(atoms.iter().map(|(g, p)| p * policy.snr(*g)).sum());
    }
    let (t_lo, t_hi) = model.log_support();
    let c = policy.cutoff();
    let lo = if c > 0.0 { c.ln().max(t_lo) } else { t_lo };
    let h = |t: f64| {
        let x = t.exp();
        let s = policy.snr(x);
        if s > 0.0 {
            s.ln() + model.ln_pdf(x) + t
        } else {
            f64::NEG_INFINITY
        }
    };
    let (l, _) = log_integrate_exp(h, lo, t_hi, &[], 1e-12)?;
    Ok(l.exp())
}

/// Rescales the level parameter of `template` (ν₀ or a₁) so that the
/// average transmit SNR equals `target`.
pub fn calibrate_average_power(template: &PowerPolicy, model: &ChannelModel, target: f64) -> Result<PowerPolicy> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Domain { what: "target SNR", value: target });
    }
    template.validate()?;
    model.validate()?;
    if matches!(template, PowerPolicy::Fixed { .. }) || matches!(model.fading, crate::Fading::Awgn) {
        return Ok(PowerPolicy::Fixed { snr: target });
    }
    let with_level = |level: f64| match *template {
        PowerPolicy::WaterFilling { gbar, .. } => PowerPolicy::WaterFilling { nu0: level, gbar },
        PowerPolicy::TangZhang { a2, snr, .. } => PowerPolicy::TangZhang { a1: level, a2, snr },
        PowerPolicy::Fixed { .. } => unreachable!(),
    };
    // Average SNR decreases in the level; bracket in log scale.
    let gap = |ll: f64| -> f64 {
        match average_snr(&with_level(ll.exp()), model) {
            Ok(v) if v > 0.0 => v.ln() - target.ln(),
            Ok(_) => -f64::INFINITY,
            Err(_) => f64::NAN,
        }
    };
    let mut lo = (1.0 / target).ln();
    let mut hi = lo;
    let mut iterations = 0;
    while gap(lo) < 0.0 {
        lo -= 1.0;
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NoConvergence { what: "power calibration bracket", iterations });
        }
    }
    while gap(hi) > 0.0 {
        hi += 1.0;
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NoConvergence { what: "power calibration bracket", iterations });
        }
    }
    if lo == hi {
        return Ok(with_level(lo.exp()));
    }
    let level = bisect(gap, lo, hi, 1e-13, 200)?;
    Ok(with_level(level.exp()))
}
