//! High-SNR behaviour of the normalized effective capacity: slopes,
//! the service-rate, reliability and real-time gains, and the checks on
//! blocklength schedules Ψ(γ) that make the normal approximation usable
//! as γ grows.

use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{ChannelModel, Fading};
use crate::error::{Error, Result};
use crate::fbc::FbcParams;
use crate::numerics::{golden_max, linear_fit};
use crate::qos::ServiceContext;
use crate::specfun::{gaussian_q_inv, k_over_v32, LOG2_E};

/// Limit slope s∞ = min{1, m/(ϱT·log₂e)}; 1 for AWGN and finite-support
/// gains.
pub fn theoretical_slope(model: &ChannelModel, varrho: f64, frame_slots: f64) -> f64 {
    match (&model.fading, model.shape_m()) {
        (Fading::Awgn | Fading::Discrete { .. }, _) | (_, None) => 1.0,
        (_, Some(m)) => (m / (varrho * frame_slots * LOG2_E)).min(1.0),
    }
}

/// Normalized EC at one SNR of a slope sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopePoint {
    pub snr: f64,
    pub log2_snr: f64,
    /// Λ(γ) in bits per channel use.
    pub normalized_ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
    /// Secant slope between the two highest grid points.
    pub endpoint_derivative: f64,
    pub points_used: usize,
    pub warning: Option<String>,
    pub curve: Vec<SlopePoint>,
}

/// Decades at the top of the grid used by the least-squares fit.
pub const SLOPE_FIT_DECADES: f64 = 1.5;

/// Least-squares slope of Λ(γ) against log₂γ over the top 1.5 decades of
/// `snr_grid`, with a fixed transmit power. `params.snr` is ignored.
pub fn empirical_slope(model: &ChannelModel, params: &FbcParams, theta: f64, snr_grid: &[f64]) -> Result<SlopeFit> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain { what: "theta", value: theta });
    }
    let mut grid = snr_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 3 || !(grid[0] > 0.0) {
        return Err(Error::InvalidParam("slope grid needs at least 3 positive SNR values".into()));
    }
    let top = *grid.last().expect("non-empty");
    if top / grid[0] < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidParam(format!("slope grid spans {:.2} decades, need 2", (top / grid[0]).log10())));
    }
    let curve = grid
        .par_iter()
        .map(|&snr| {
            let p = FbcParams { snr, ..*params };
            let ec = ServiceContext::fixed(model.clone(), p)?.ec(theta)?;
            Ok(SlopePoint { snr, log2_snr: snr.log2(), normalized_ec: ec.normalized })
        })
        .collect::<Result<Vec<_>>>()?;
    let floor = top / 10f64.powf(SLOPE_FIT_DECADES) * (1.0 - 1e-12);
    let used: Vec<&SlopePoint> = curve.iter().filter(|p| p.snr >= floor).collect();
    let used: Vec<&SlopePoint> = if used.len() >= 3 { used } else { curve.iter().collect() };
    let xs: Vec<f64> = used.iter().map(|p| p.log2_snr).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.normalized_ec).collect();
    let fit = linear_fit(&xs, &ys)?;
    let n = curve.len();
    let endpoint_derivative =
        (curve[n - 1].normalized_ec - curve[n - 2].normalized_ec) / (curve[n - 1].log2_snr - curve[n - 2].log2_snr);
    let warning = (fit.r2 < 0.999).then(|| format!("ill-conditioned slope fit: R^2 = {:.6}", fit.r2));
    Ok(SlopeFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        slope_stderr: fit.slope_stderr,
        endpoint_derivative,
        points_used: used.len(),
        warning,
        curve,
    })
}

/// Maximizer of K(x)/V(x)^{3/2} over x ≥ 0 and the constants built on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarsigmaThresholds {
    pub c0: f64,
    pub error_prob: f64,
    /// max K/V^{3/2}.
    pub max_ratio: f64,
    /// Where the maximum is attained (0 or ∞ for the end limits).
    pub argmax: f64,
    pub varsigma1: f64,
    pub varsigma2: f64,
}

/// max over x ≥ 0 of K(x)/V(x)^{3/2} for c₀ = 1, with its location.
/// Both ends have finite limits; the ratio climbs to its x → ∞ limit
/// E|z² − 1|³/(log₂e)³, so the supremum is usually attained there.
fn max_k_ratio() -> (f64, f64) {
    let f = |t: f64| k_over_v32(t.exp(), 1.0).unwrap_or(f64::NAN);
    let (lo, hi, n) = (-30.0, 30.0, 600);
    let step = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + step * i as f64)).collect();
    let (imax, vmax) = vals.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let (mut best_x, mut best) = (lo.exp(), vmax);
    if imax > 0 && imax < n {
        let a = lo + step * (imax - 1) as f64;
        let (t, v) = golden_max(f, a, a + 2.0 * step, 1e-10);
        if v > best {
            (best_x, best) = (t.exp(), v);
        }
    }
    let at_zero = k_over_v32(0.0, 1.0).expect("finite limit");
    let at_inf = k_over_v32(f64::INFINITY, 1.0).expect("finite limit");
    let tie = 1e-10 * best;
    if at_inf >= best - tie {
        (f64::INFINITY, at_inf.max(best))
    } else if at_zero >= best - tie {
        (0.0, at_zero.max(best))
    } else {
        (best_x, best)
    }
}

/// ς₁ = max{(2K/((1−ε)V^{3/2}))², (2K/(εV^{3/2}))²} and ς₂ = 4·max K²/V³.
pub fn varsigma_thresholds(c0: f64, error_prob: f64) -> Result<VarsigmaThresholds> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::Domain { what: "c0", value: c0 });
    }
    if !(error_prob > 0.0 && error_prob < 1.0) {
        return Err(Error::Domain { what: "error probability", value: error_prob });
    }
    let (argmax, r1) = max_k_ratio();
    let max_ratio = c0 * r1;
    let m = max_ratio * max_ratio;
    let e = error_prob.min(1.0 - error_prob);
    Ok(VarsigmaThresholds {
        c0,
        error_prob,
        max_ratio,
        argmax,
        varsigma1: 4.0 * m / (e * e),
        varsigma2: 4.0 * m,
    })
}

/// Shape of Ψ(γ).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiForm {
    Constant { value: f64 },
    /// coef·(log₂γ)^power.
    Polylog { coef: f64, power: f64 },
    /// e^{(Q⁻¹(ε(γ))/2)²} + (ς₂ + margin)/ε²(γ).
    ExpQinv { margin: f64 },
    /// Log-log interpolation of (γ, Ψ) pairs, extended linearly beyond
    /// the ends.
    Table { snr: Vec<f64>, psi: Vec<f64> },
}

/// Error probability as a function of SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsSchedule {
    Fixed { eps: f64 },
    /// ε(γ) = γ^{−β}, capped at 1/2.
    PowerLaw { beta: f64 },
}

/// A blocklength schedule Ψ(γ) with its error-probability schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiSchedule {
    pub form: PsiForm,
    pub eps: EpsSchedule,
    pub c0: f64,
    varsigma2: f64,
}

impl PsiSchedule {
    pub fn new(form: PsiForm, eps: EpsSchedule, c0: f64) -> Result<Self> {
        match &form {
            PsiForm::Constant { value } if !(*value >= 1.0 && value.is_finite()) => {
                return Err(Error::InvalidParam(format!("constant blocklength must be >= 1, got {value}")));
            }
            PsiForm::Polylog { coef, power } if !(*coef > 0.0 && power.is_finite()) => {
                return Err(Error::InvalidParam("polylog schedule needs coef > 0 and finite power".into()));
            }
            PsiForm::ExpQinv { margin } if !(*margin > 0.0) => {
                return Err(Error::InvalidParam("exp-Qinv schedule needs margin > 0".into()));
            }
            PsiForm::Table { snr, psi } => {
                if snr.len() < 2 || snr.len() != psi.len() {
                    return Err(Error::InvalidParam("psi table needs >= 2 paired rows".into()));
                }
                if snr.windows(2).any(|w| !(w[1] > w[0])) || snr[0] <= 0.0 || psi.iter().any(|p| !(*p >= 1.0)) {
                    return Err(Error::InvalidParam("psi table needs increasing positive snr and psi >= 1".into()));
                }
            }
            _ => {}
        }
        match eps {
            EpsSchedule::Fixed { eps } if !(eps > 0.0 && eps <= 0.5) => {
                return Err(Error::Domain { what: "error probability", value: eps });
            }
            EpsSchedule::PowerLaw { beta } if !(beta > 0.0 && beta.is_finite()) => {
                return Err(Error::Domain { what: "beta", value: beta });
            }
            _ => {}
        }
        let varsigma2 = varsigma_thresholds(c0, 0.5)?.varsigma2;
        Ok(Self { form, eps, c0, varsigma2 })
    }

    pub fn varsigma2(&self) -> f64 {
        self.varsigma2
    }

    pub fn eps_at(&self, snr: f64) -> f64 {
        match self.eps {
            EpsSchedule::Fixed { eps } => eps,
            EpsSchedule::PowerLaw { beta } => snr.powf(-beta).min(0.5),
        }
    }

    /// Ψ(γ), floored at 1.
    pub fn psi_at(&self, snr: f64) -> f64 {
        let v = match &self.form {
            PsiForm::Constant { value } => *value,
            PsiForm::Polylog { coef, power } => coef * snr.log2().max(0.0).powf(*power),
            PsiForm::ExpQinv { margin } => {
                let e = self.eps_at(snr);
                let q = gaussian_q_inv(e).unwrap_or(0.0);
                (0.25 * q * q).exp() + (self.varsigma2 + margin) / (e * e)
            }
            PsiForm::Table { snr: xs, psi } => {
                let t = snr.ln();
                let i = xs.partition_point(|x| x.ln() <= t).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[i - 1].ln(), xs[i].ln());
                let (y0, y1) = (psi[i - 1].ln(), psi[i].ln());
                (y0 + (y1 - y0) * (t - x0) / (x1 - x0)).exp()
            }
        };
        v.max(1.0)
    }

    /// Whether ε(γ) goes to zero with the SNR.
    pub fn vanishing_eps(&self) -> bool {
        matches!(self.eps, EpsSchedule::PowerLaw { .. })
    }
}

/// One admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    pub pass: bool,
    /// Threshold conditions: smallest margin ratio (pass when > 1).
    /// Trend conditions: largest value of the ratio on the grid.
    pub worst_ratio: f64,
    /// Trend conditions: d ln(ratio)/d ln(log₂γ) over the top decade
    /// (pass when ≤ 0.1, i.e. the ratio is not growing).
    pub trend: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiVerdict {
    /// "fixed_eps" or "vanishing_eps".
    pub mode: String,
    pub admissible: bool,
    pub conditions: Vec<Condition>,
}

const TREND_LIMIT: f64 = 0.1;

/// Log-log trend of `ratio` against log₂γ over the top decade of the grid.
fn trend<F: Fn(f64) -> f64>(ratio: F, top: f64) -> f64 {
    let pts: Vec<f64> = (0..6).map(|i| top * 10f64.powf(-1.0 + i as f64 / 5.0)).collect();
    let xs: Vec<f64> = pts.iter().map(|g| g.log2().max(1e-3).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&g| ratio(g).ln()).collect();
    linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN)
}

/// Checks a schedule against the blocklength conditions on `snr_grid`.
pub fn check_psi(schedule: &PsiSchedule, snr_grid: &[f64]) -> Result<PsiVerdict> {
    if snr_grid.is_empty() || snr_grid.iter().any(|g| !(*g > 1.0 && g.is_finite())) {
        return Err(Error::InvalidParam("psi check grid needs SNR values > 1".into()));
    }
    let top = snr_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut conditions = Vec::new();

    let base = varsigma_thresholds(schedule.c0, 0.5)?;
    let m = base.max_ratio * base.max_ratio;
    let varsigma1 = |e: f64| 4.0 * m / e.min(1.0 - e).powi(2);
    let t2 = snr_grid
        .iter()
        .map(|&g| schedule.psi_at(g) / varsigma1(schedule.eps_at(g)))
        .fold(f64::INFINITY, f64::min);
    conditions.push(Condition { name: "psi_above_varsigma1".into(), pass: t2 > 1.0, worst_ratio: t2, trend: None });

    let t3a = snr_grid
        .iter()
        .map(|&g| {
            let e = schedule.eps_at(g);
            schedule.psi_at(g) * e * e / base.varsigma2
        })
        .fold(f64::INFINITY, f64::min);
    conditions.push(Condition { name: "psi_eps2_above_varsigma2".into(), pass: t3a > 1.0, worst_ratio: t3a, trend: None });

    let exp_ratio = |g: f64| {
        let q = gaussian_q_inv(schedule.eps_at(g)).unwrap_or(0.0);
        (0.25 * q * q).exp() / schedule.psi_at(g)
    };
    let w = snr_grid.iter().map(|&g| exp_ratio(g)).fold(0.0, f64::max);
    let tr = trend(exp_ratio, top);
    conditions.push(Condition { name: "exp_qinv_over_psi_bounded".into(), pass: tr <= TREND_LIMIT, worst_ratio: w, trend: Some(tr) });

    let q_ratio = |g: f64| gaussian_q_inv(schedule.eps_at(g)).unwrap_or(0.0).max(1e-300) / schedule.psi_at(g).sqrt();
    let w = snr_grid.iter().map(|&g| q_ratio(g)).fold(0.0, f64::max);
    let tr = trend(q_ratio, top);
    conditions.push(Condition { name: "qinv_over_sqrt_psi_bounded".into(), pass: tr <= TREND_LIMIT, worst_ratio: w, trend: Some(tr) });

    let (mode, admissible) = if schedule.vanishing_eps() {
        ("vanishing_eps", conditions[1..].iter().all(|c| c.pass))
    } else {
        ("fixed_eps", conditions[0].pass)
    };
    Ok(PsiVerdict { mode: mode.into(), admissible, conditions })
}

/// Estimated high-SNR gains at the top of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub snr_top: f64,
    pub blocklength_top: f64,
    pub error_prob_top: f64,
    pub varrho: f64,
    /// Service-rate gain dΛ/dlog₂γ.
    pub zeta: f64,
    /// Reliability gain.
    pub varpi: f64,
    /// Real-time gain −(1/D)·dlog₂δ/dlog₂γ.
    pub tau: f64,
    pub c4: f64,
    pub s_inf_theory: f64,
    /// |ζ + c₄ϖ − s∞|.
    pub residual_conservation: f64,
    /// |τ − ϱ·log₂e·ζ|.
    pub residual_realtime: f64,
}

/// Richardson-extrapolated central derivative at x with spacings h, h/2.
fn richardson<F: Fn(f64) -> Result<f64>>(f: F, x: f64, h: f64) -> Result<f64> {
    let d = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    let (d1, d2) = (d(h)?, d(0.5 * h)?);
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Spacing in log₂γ for the gain derivatives.
const GAIN_STEP: f64 = 1.0;

/// ζ, ϖ, τ and c₄ at the top of `snr_grid` for a blocklength schedule,
/// a fixed revised exponent ϱ = θN and the frame length of `model`.
pub fn gains_report(model: &ChannelModel, schedule: &PsiSchedule, varrho: f64, snr_grid: &[f64]) -> Result<GainReport> {
    if !(varrho > 0.0 && varrho.is_finite()) {
        return Err(Error::Domain { what: "varrho", value: varrho });
    }
    model.validate()?;
    let verdict = check_psi(schedule, snr_grid)?;
    if !verdict.admissible {
        let failed: Vec<&str> = verdict.conditions.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::ScheduleInadmissible(format!("{} conditions failed: {}", verdict.mode, failed.join(", "))));
    }
    let top = snr_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x0 = top.log2();
    let t = model.frame_slots as f64;
    let lambda = varrho * t;

    // ln E{exp(−ϱT·r)} at log₂γ = x; Λ = −ln E/(ϱT).
    let ln_e = |x: f64| -> Result<f64> {
        let g = x.exp2();
        let n = schedule.psi_at(g);
        let e = schedule.eps_at(g);
        let params = FbcParams::new(n, e, g)?;
        Ok(ServiceContext::fixed(model.clone(), params)?.log_laplace_transform(lambda)?.0)
    };
    let d_ln_e = richardson(ln_e, x0, GAIN_STEP)?;
    let zeta = -d_ln_e / lambda;
    let tau = -LOG2_E * d_ln_e / t;

    let n_top = schedule.psi_at(top);
    let varpi = match schedule.eps {
        EpsSchedule::Fixed { .. } => 0.0,
        // √(−log₂ε) = √(βx): derivative √β/(2√x).
        EpsSchedule::PowerLaw { beta } => (2.0 * LOG2_E).sqrt() * beta.sqrt() / (2.0 * x0.sqrt()) / n_top.sqrt(),
    };
    let sqrt_psi = |x: f64| -> Result<f64> { Ok(schedule.psi_at(x.exp2()).sqrt()) };
    let d_sqrt_psi = richardson(sqrt_psi, x0, GAIN_STEP)?;
    let c4 = 1.0 / (1.0 + (d_sqrt_psi * x0 / n_top.sqrt()).max(0.0));

    let s_inf_theory = theoretical_slope(model, varrho, t);
    Ok(GainReport {
        snr_top: top,
        blocklength_top: n_top,
        error_prob_top: schedule.eps_at(top),
        varrho,
        zeta,
        varpi,
        tau,
        c4,
        s_inf_theory,
        residual_conservation: (zeta + c4 * varpi - s_inf_theory).abs(),
        residual_realtime: (tau - varrho * LOG2_E * zeta).abs(),
    })
}
