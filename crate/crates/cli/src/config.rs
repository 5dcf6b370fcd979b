//! The JSON run configuration shared by every subcommand.
//!
//! Every object rejects unknown keys. Quantities with a unit carry it in
//! the key name (`snr_db`, `snr_linear`, `rate_bits`, ...). Each
//! subcommand reads the common sections plus its own.

use std::path::Path;

use fbl_qos::asymptotics::{EpsSchedule, PsiForm, PsiSchedule};
use fbl_qos::numerics::logspace;
use fbl_qos::power::calibrate_average_power;
use fbl_qos::{ArrivalProcess, ChannelModel, Fading, FbcParams, PowerPolicy, ServiceContext, ZeroPowerRate};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub channel: Option<ChannelCfg>,
    pub policy: Option<PolicyCfg>,
    pub fbc: Option<FbcCfg>,
    #[serde(default)]
    pub arq: bool,
    pub arrival: Option<ArrivalCfg>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub ec: Option<EcCfg>,
    pub slope: Option<SlopeCfg>,
    pub gains: Option<GainsCfg>,
    pub simulate: Option<SimulateCfg>,
    pub tradeoff: Option<TradeoffCfg>,
    pub check: Option<CheckCfg>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelCfg {
    /// awgn | rayleigh | nakagami | rayleigh_diversity | discrete
    pub kind: String,
    pub omega: Option<f64>,
    pub m: Option<f64>,
    pub kappa: Option<u32>,
    pub gains_linear: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
    pub frame_slots: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCfg {
    /// fixed | water_filling | tang_zhang
    pub kind: String,
    pub nu0: Option<f64>,
    pub gbar_linear: Option<f64>,
    pub gbar_db: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    /// Rescale the policy so that the average SNR equals `fbc` SNR.
    #[serde(default = "yes")]
    pub calibrate: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbcCfg {
    pub blocklength: f64,
    pub error_prob: f64,
    pub snr_db: Option<f64>,
    pub snr_linear: Option<f64>,
    /// normal_approx | zero
    pub zero_power_rate: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalCfg {
    /// deterministic | bernoulli_packet | poisson_bits
    pub kind: String,
    pub bits: Option<f64>,
    pub prob: Option<f64>,
    pub rate_bits: Option<f64>,
    /// Mean arrival as a fraction of the mean service.
    pub load: Option<f64>,
}

/// Either explicit `values` or `start`/`stop`/`points` with a spacing.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    /// log | linear (default log)
    pub spacing: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcCfg {
    pub theta: GridCfg,
    pub mc_frames: Option<usize>,
    /// Subset of quadrature, mc, laplace.
    pub methods: Option<Vec<String>>,
    /// per_frame | as_printed, for the truncated form.
    pub truncated_prefactor: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeCfg {
    pub theta: GridCfg,
    pub snr_db: GridCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleCfg {
    pub psi: PsiCfg,
    pub eps: EpsCfg,
    pub c0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiCfg {
    /// constant | polylog | exp_qinv | table
    pub kind: String,
    pub value: Option<f64>,
    pub coef: Option<f64>,
    pub power: Option<f64>,
    pub margin: Option<f64>,
    pub snr_linear: Option<Vec<f64>>,
    pub psi: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsCfg {
    /// fixed | power_law
    pub kind: String,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsCfg {
    pub varrho: GridCfg,
    pub snr_db: GridCfg,
    pub schedule: ScheduleCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckCfg {
    pub snr_db: GridCfg,
    pub schedule: ScheduleCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub n_slots: u64,
    pub warmup: Option<u64>,
    pub queue_thresholds_bits: Option<GridCfg>,
    /// Thresholds as multiples of 1/θ for the solved exponent θ.
    pub queue_thresholds_theta_units: Option<GridCfg>,
    pub delay_thresholds_slots: Vec<u64>,
    pub batches: Option<usize>,
    pub replications: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffCfg {
    pub queue_threshold_bits: f64,
    pub chi: GridCfg,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
}

/// Keys set that `kind` does not use.
fn reject_extra(section: &str, kind: &str, set: &[(&str, bool)]) -> Result<(), CliError> {
    match set.iter().find(|(_, present)| *present) {
        Some((key, _)) => cfg_err(format!("key `{section}.{key}` does not apply to kind `{kind}`")),
        None => Ok(()),
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Exactly one of the dB and linear keys.
fn snr_pair(db_v: Option<f64>, lin: Option<f64>, db_key: &str, lin_key: &str) -> Result<f64, CliError> {
    match (db_v, lin) {
        (Some(d), None) => Ok(db(d)),
        (None, Some(l)) => Ok(l),
        (Some(_), Some(_)) => cfg_err(format!("give only one of `{db_key}` and `{lin_key}`")),
        (None, None) => cfg_err(format!("missing key `{db_key}` or `{lin_key}`")),
    }
}

impl GridCfg {
    pub fn resolve(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) if self.spacing.is_none() => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return cfg_err(format!("`{key}.points` must be positive"));
                }
                match self.spacing.as_deref().unwrap_or("log") {
                    "log" => {
                        if !(a > 0.0 && b > 0.0) {
                            return cfg_err(format!("`{key}` log grid needs positive start and stop"));
                        }
                        logspace(a, b, n)
                    }
                    "linear" => {
                        if n == 1 {
                            vec![a]
                        } else {
                            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
                        }
                    }
                    other => return cfg_err(format!("`{key}.spacing` must be log or linear, got `{other}`")),
                }
            }
            _ => return cfg_err(format!("`{key}` needs either `values` or `start`, `stop` and `points`")),
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return cfg_err(format!("`{key}` must hold finite values"));
        }
        Ok(v)
    }
}

impl RunConfig {
    pub fn model(&self) -> Result<ChannelModel, CliError> {
        let c = self.channel.as_ref().ok_or_else(|| CliError::Config("missing section `channel`".into()))?;
        let t = c.frame_slots.unwrap_or(1);
        let kind = c.kind.as_str();
        let fading = match kind {
            "awgn" => {
                reject_extra("channel", kind, &[
                    ("omega", c.omega.is_some()),
                    ("m", c.m.is_some()),
                    ("kappa", c.kappa.is_some()),
                    ("gains_linear", c.gains_linear.is_some()),
                    ("probs", c.probs.is_some()),
                ])?;
                Fading::Awgn
            }
            "rayleigh" => {
                reject_extra("channel", kind, &[
                    ("m", c.m.is_some()),
                    ("kappa", c.kappa.is_some()),
                    ("gains_linear", c.gains_linear.is_some()),
                    ("probs", c.probs.is_some()),
                ])?;
                Fading::Rayleigh { omega: c.omega.unwrap_or(1.0) }
            }
            "nakagami" => {
                reject_extra("channel", kind, &[
                    ("kappa", c.kappa.is_some()),
                    ("gains_linear", c.gains_linear.is_some()),
                    ("probs", c.probs.is_some()),
                ])?;
                Fading::Nakagami { m: need(c.m, "channel.m")?, omega: c.omega.unwrap_or(1.0) }
            }
            "rayleigh_diversity" => {
                reject_extra("channel", kind, &[
                    ("omega", c.omega.is_some()),
                    ("m", c.m.is_some()),
                    ("gains_linear", c.gains_linear.is_some()),
                    ("probs", c.probs.is_some()),
                ])?;
                Fading::RayleighDiversity { kappa: need(c.kappa, "channel.kappa")? }
            }
            "discrete" => {
                reject_extra("channel", kind, &[
                    ("omega", c.omega.is_some()),
                    ("m", c.m.is_some()),
                    ("kappa", c.kappa.is_some()),
                ])?;
                let gains = c.gains_linear.clone().ok_or_else(|| CliError::Config("missing key `channel.gains_linear`".into()))?;
                let probs = c.probs.clone().ok_or_else(|| CliError::Config("missing key `channel.probs`".into()))?;
                Fading::Discrete { gains, probs }
            }
            other => return cfg_err(format!("unknown `channel.kind` `{other}`")),
        };
        Ok(ChannelModel::new(fading, t)?)
    }

    pub fn fbc(&self) -> Result<FbcParams, CliError> {
        let f = self.fbc.as_ref().ok_or_else(|| CliError::Config("missing section `fbc`".into()))?;
        let snr = snr_pair(f.snr_db, f.snr_linear, "fbc.snr_db", "fbc.snr_linear")?;
        let mut p = FbcParams::new(f.blocklength, f.error_prob, snr)?;
        p.zero_power_rate = match f.zero_power_rate.as_deref() {
            None | Some("normal_approx") => ZeroPowerRate::NormalApprox,
            Some("zero") => ZeroPowerRate::Zero,
            Some(other) => return cfg_err(format!("`fbc.zero_power_rate` must be normal_approx or zero, got `{other}`")),
        };
        Ok(p)
    }

    /// The policy, calibrated to the `fbc` SNR on average unless told
    /// otherwise. Fixed power always transmits at the `fbc` SNR.
    pub fn policy(&self, model: &ChannelModel, params: &FbcParams) -> Result<PowerPolicy, CliError> {
        let Some(p) = self.policy.as_ref() else {
            return Ok(PowerPolicy::Fixed { snr: params.snr });
        };
        let kind = p.kind.as_str();
        let raw = match kind {
            "fixed" => {
                reject_extra("policy", kind, &[
                    ("nu0", p.nu0.is_some()),
                    ("gbar_linear", p.gbar_linear.is_some()),
                    ("gbar_db", p.gbar_db.is_some()),
                    ("a1", p.a1.is_some()),
                    ("a2", p.a2.is_some()),
                ])?;
                return Ok(PowerPolicy::Fixed { snr: params.snr });
            }
            "water_filling" => {
                reject_extra("policy", kind, &[("a1", p.a1.is_some()), ("a2", p.a2.is_some())])?;
                let gbar = match (p.gbar_db, p.gbar_linear) {
                    (None, None) => params.snr,
                    (d, l) => snr_pair(d, l, "policy.gbar_db", "policy.gbar_linear")?,
                };
                PowerPolicy::WaterFilling { nu0: need(p.nu0, "policy.nu0")?, gbar }
            }
            "tang_zhang" => {
                reject_extra("policy", kind, &[
                    ("nu0", p.nu0.is_some()),
                    ("gbar_linear", p.gbar_linear.is_some()),
                    ("gbar_db", p.gbar_db.is_some()),
                ])?;
                PowerPolicy::TangZhang { a1: need(p.a1, "policy.a1")?, a2: need(p.a2, "policy.a2")?, snr: params.snr }
            }
            other => return cfg_err(format!("unknown `policy.kind` `{other}`")),
        };
        raw.validate()?;
        if p.calibrate {
            Ok(calibrate_average_power(&raw, model, params.snr)?)
        } else {
            Ok(raw)
        }
    }

    pub fn service(&self) -> Result<ServiceContext, CliError> {
        let model = self.model()?;
        let params = self.fbc()?;
        let policy = self.policy(&model, &params)?;
        Ok(ServiceContext::new(model, policy, params, self.arq)?)
    }

    /// The arrival law; `load` is resolved against `mean_service`.
    pub fn arrival(&self, mean_service: f64) -> Result<ArrivalProcess, CliError> {
        let a = self.arrival.as_ref().ok_or_else(|| CliError::Config("missing section `arrival`".into()))?;
        let kind = a.kind.as_str();
        let mean = |direct: Option<f64>, key: &str| -> Result<f64, CliError> {
            match (direct, a.load) {
                (Some(v), None) => Ok(v),
                (None, Some(l)) => Ok(l * mean_service),
                (Some(_), Some(_)) => cfg_err(format!("give only one of `arrival.{key}` and `arrival.load`")),
                (None, None) => cfg_err(format!("missing key `arrival.{key}` or `arrival.load`")),
            }
        };
        let out = match kind {
            "deterministic" => {
                reject_extra("arrival", kind, &[("prob", a.prob.is_some()), ("rate_bits", a.rate_bits.is_some())])?;
                ArrivalProcess::Deterministic { bits: mean(a.bits, "bits")? }
            }
            "poisson_bits" => {
                reject_extra("arrival", kind, &[("prob", a.prob.is_some()), ("bits", a.bits.is_some())])?;
                ArrivalProcess::PoissonBits { rate: mean(a.rate_bits, "rate_bits")? }
            }
            "bernoulli_packet" => {
                reject_extra("arrival", kind, &[("rate_bits", a.rate_bits.is_some())])?;
                let prob = need(a.prob, "arrival.prob")?;
                let bits = match (a.bits, a.load) {
                    (Some(b), None) => b,
                    (None, Some(l)) => l * mean_service / prob,
                    (Some(_), Some(_)) => return cfg_err("give only one of `arrival.bits` and `arrival.load`"),
                    (None, None) => return cfg_err("missing key `arrival.bits` or `arrival.load`"),
                };
                ArrivalProcess::BernoulliPacket { bits, prob }
            }
            other => return cfg_err(format!("unknown `arrival.kind` `{other}`")),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| CliError::Config(format!("missing section `{name}`")))
    }
}

impl ScheduleCfg {
    pub fn build(&self, key: &str) -> Result<PsiSchedule, CliError> {
        let p = &self.psi;
        let kind = p.kind.as_str();
        let k = |name: &str| format!("{key}.psi.{name}");
        let form = match kind {
            "constant" => PsiForm::Constant { value: need(p.value, &k("value"))? },
            "polylog" => PsiForm::Polylog { coef: need(p.coef, &k("coef"))?, power: need(p.power, &k("power"))? },
            "exp_qinv" => PsiForm::ExpQinv { margin: need(p.margin, &k("margin"))? },
            "table" => PsiForm::Table {
                snr: p.snr_linear.clone().ok_or_else(|| CliError::Config(format!("missing key `{}`", k("snr_linear"))))?,
                psi: p.psi.clone().ok_or_else(|| CliError::Config(format!("missing key `{}`", k("psi"))))?,
            },
            other => return cfg_err(format!("unknown `{key}.psi.kind` `{other}`")),
        };
        let e = &self.eps;
        let eps = match e.kind.as_str() {
            "fixed" => EpsSchedule::Fixed { eps: need(e.eps, &format!("{key}.eps.eps"))? },
            "power_law" => EpsSchedule::PowerLaw { beta: need(e.beta, &format!("{key}.eps.beta"))? },
            other => return cfg_err(format!("unknown `{key}.eps.kind` `{other}`")),
        };
        Ok(PsiSchedule::new(form, eps, self.c0.unwrap_or(1.0))?)
    }
}

pub fn snr_db_grid(g: &GridCfg, key: &str) -> Result<Vec<f64>, CliError> {
    // dB grids are evenly spaced in dB unless values are given.
    let vals = match (&g.values, g.spacing.as_deref()) {
        (None, None) => GridCfg { spacing: Some("linear".into()), ..g.clone() }.resolve(key)?,
        _ => g.resolve(key)?,
    };
    Ok(vals.into_iter().map(db).collect())
}
