use fbl_qos::asymptotics::{check_psi, empirical_slope, gains_report, theoretical_slope};
use fbl_qos::laplace::{ec_laplace, ec_laplace_arq, ec_laplace_truncated, LaplaceResult, TruncPrefactor};
use fbl_qos::qos::{effective_bandwidth, effective_capacity_montecarlo, epsilon_chi_bound, solve_qos_exponent};
use fbl_qos::queuesim::{compare_ldt, simulate as run_sim, simulate_replications, LdtTolerances, SimConfig, DEFAULT_BATCHES};
use fbl_qos::{ChannelModel, EcEstimate, Fading, PowerPolicy, QosExponent, QosState, ServiceContext};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{snr_db_grid, RunConfig};
use crate::output::{num, opt, Outputs};
use crate::{CliError, Method, Opts};

const EC_HEADER: [&str; 6] = ["theta", "method", "ec_bits", "ec_per_use", "error_estimate", "status"];

/// Bracket for the QoS exponent, per bit.
const THETA_BRACKET: (f64, f64) = (1e-9, 1.0);

fn seed(cfg: &RunConfig, opts: &Opts) -> u64 {
    opts.seed.unwrap_or(cfg.seed)
}

fn ec_row(theta: &str, r: Result<EcEstimate, fbl_qos::Error>, fallback: &str) -> Vec<String> {
    match r {
        Ok(e) => vec![
            theta.into(),
            e.method.name().into(),
            num(e.value),
            num(e.normalized),
            opt(e.error),
            "ok".into(),
        ],
        Err(err) => vec![theta.into(), fallback.into(), String::new(), String::new(), String::new(), err.to_string()],
    }
}

fn laplace_row(theta: f64, r: Result<LaplaceResult, fbl_qos::Error>, oracle: Option<f64>, name: &str) -> Vec<String> {
    match r {
        Ok(l) => vec![
            num(theta),
            name.into(),
            num(l.ec_value),
            num(l.normalized),
            opt(oracle.map(|q| l.ec_value - q)),
            "ok".into(),
        ],
        Err(err) => vec![num(theta), name.into(), String::new(), String::new(), String::new(), err.to_string()],
    }
}

#[derive(Serialize)]
struct EcSummary<'a> {
    service: &'a ServiceContext,
    mean_service_bits: f64,
    mean_service_per_use: f64,
    methods: Vec<&'static str>,
    mc_frames: usize,
    seed: u64,
}

pub fn ec(cfg: &RunConfig, opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.ec, "ec")?;
    let ctx = cfg.service()?;
    let thetas = sec.theta.resolve("ec.theta")?;
    let (mut quad, mut mc, mut lap) = (false, false, false);
    match opts.method {
        Some(Method::Quadrature) => quad = true,
        Some(Method::Mc) => mc = true,
        Some(Method::Laplace) => lap = true,
        Some(Method::All) => (quad, mc, lap) = (true, true, true),
        None => match &sec.methods {
            None => (quad, mc, lap) = (true, true, true),
            Some(list) => {
                for m in list {
                    match m.as_str() {
                        "quadrature" => quad = true,
                        "mc" => mc = true,
                        "laplace" => lap = true,
                        other => return Err(CliError::Config(format!("unknown entry `{other}` in `ec.methods`"))),
                    }
                }
            }
        },
    }
    let prefactor = match sec.truncated_prefactor.as_deref() {
        None | Some("per_frame") => TruncPrefactor::PerFrame,
        Some("as_printed") => TruncPrefactor::AsPrinted,
        Some(other) => {
            return Err(CliError::Config(format!("`ec.truncated_prefactor` must be per_frame or as_printed, got `{other}`")))
        }
    };
    let frames = sec.mc_frames.unwrap_or(1_000_000);
    let seed = seed(cfg, opts);

    let rows: Vec<Vec<String>> = if matches!(ctx.model.fading, Fading::Awgn) && !ctx.arq {
        // A constant service makes α_S the same for every θ.
        vec![ec_row("", ctx.ec(thetas[0]).map(|e| EcEstimate { theta: f64::NAN, ..e }), "exact")]
    } else {
        let per_theta: Vec<Vec<Vec<String>>> = thetas
            .par_iter()
            .map(|&th| {
                let mut out = Vec::new();
                let q = if quad || lap { Some(ctx.ec(th)) } else { None };
                let oracle = q.as_ref().and_then(|r| r.as_ref().ok()).map(|e| e.value);
                if quad {
                    out.push(ec_row(&num(th), q.unwrap(), "quadrature"));
                }
                if mc {
                    out.push(ec_row(&num(th), effective_capacity_montecarlo(&ctx, th, frames, seed), "montecarlo"));
                }
                if lap {
                    let (m, p, f) = (&ctx.model, &ctx.policy, &ctx.params);
                    let (name, r) = if ctx.arq {
                        ("laplace_arq", ec_laplace_arq(m, p, f, th))
                    } else if matches!(p, PowerPolicy::Fixed { .. }) {
                        ("laplace", ec_laplace(m, p, f, th))
                    } else {
                        ("laplace_truncated", ec_laplace_truncated(m, p, f, th, prefactor))
                    };
                    out.push(laplace_row(th, r, if quad { oracle } else { None }, name));
                }
                out
            })
            .collect();
        per_theta.into_iter().flatten().collect()
    };

    let mut methods = Vec::new();
    for (on, name) in [(quad, "quadrature"), (mc, "montecarlo"), (lap, "laplace")] {
        if on {
            methods.push(name);
        }
    }
    let mean = ctx.mean_service();
    let summary = EcSummary {
        service: &ctx,
        mean_service_bits: mean,
        mean_service_per_use: mean / ctx.params.blocklength,
        methods,
        mc_frames: frames,
        seed,
    };
    let mut out = Outputs::default();
    out.csv("ec.csv", &EC_HEADER, &rows)?;
    out.json("ec.json", &summary)?;
    Ok(out)
}

pub fn slope(cfg: &RunConfig, _opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.slope, "slope")?;
    let model = cfg.model()?;
    let params = cfg.fbc()?;
    let thetas = sec.theta.resolve("slope.theta")?;
    let grid = snr_db_grid(&sec.snr_db, "slope.snr_db")?;
    let t = model.frame_slots as f64;
    let fits = thetas
        .par_iter()
        .map(|&th| empirical_slope(&model, &params, th, &grid))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for (&th, f) in thetas.iter().zip(&fits) {
        rows.push(vec![
            num(th),
            num(th * params.blocklength),
            num(f.slope),
            num(theoretical_slope(&model, th * params.blocklength, t)),
            num(f.intercept),
            num(f.r2),
            num(f.slope_stderr),
            num(f.endpoint_derivative),
            f.points_used.to_string(),
            f.warning.clone().unwrap_or_default(),
        ]);
        for p in &f.curve {
            curve.push(vec![num(th), num(10.0 * p.snr.log10()), num(p.log2_snr), num(p.normalized_ec)]);
        }
    }
    let mut out = Outputs::default();
    out.csv(
        "slope.csv",
        &["theta", "varrho", "slope", "theory", "intercept", "r2", "slope_stderr", "endpoint_derivative", "points_used", "warning"],
        &rows,
    )?;
    out.csv("slope_curve.csv", &["theta", "snr_db", "log2_snr", "normalized_ec"], &curve)?;
    Ok(out)
}

pub fn gains(cfg: &RunConfig, _opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.gains, "gains")?;
    let model = cfg.model()?;
    let schedule = sec.schedule.build("gains.schedule")?;
    let varrhos = sec.varrho.resolve("gains.varrho")?;
    let grid = snr_db_grid(&sec.snr_db, "gains.snr_db")?;
    let reports = varrhos
        .par_iter()
        .map(|&v| gains_report(&model, &schedule, v, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                num(r.varrho),
                num(10.0 * r.snr_top.log10()),
                num(r.blocklength_top),
                num(r.error_prob_top),
                num(r.zeta),
                num(r.varpi),
                num(r.tau),
                num(r.c4),
                num(r.s_inf_theory),
                num(r.residual_conservation),
                num(r.residual_realtime),
            ]
        })
        .collect();
    let mut out = Outputs::default();
    out.csv(
        "gains.csv",
        &[
            "varrho",
            "snr_top_db",
            "blocklength_top",
            "error_prob_top",
            "zeta",
            "varpi",
            "tau",
            "c4",
            "s_inf_theory",
            "residual_conservation",
            "residual_realtime",
        ],
        &rows,
    )?;
    out.json("gains.json", &reports)?;
    Ok(out)
}

pub fn check(cfg: &RunConfig, _opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.check, "check")?;
    let schedule = sec.schedule.build("check.schedule")?;
    let grid = snr_db_grid(&sec.snr_db, "check.snr_db")?;
    let verdict = check_psi(&schedule, &grid)?;
    let rows: Vec<Vec<String>> = verdict
        .conditions
        .iter()
        .map(|c| vec![c.name.clone(), c.pass.to_string(), num(c.worst_ratio), opt(c.trend)])
        .collect();
    let mut out = Outputs::default();
    out.csv("check.csv", &["condition", "pass", "worst_ratio", "trend"], &rows)?;
    out.json("check.json", &verdict)?;
    Ok(out)
}

#[derive(Serialize)]
struct SimSummary {
    exponent: QosExponent,
    effective_bandwidth_bits: Option<f64>,
    mean_service_bits: f64,
    seed: u64,
    replications: usize,
    throughput: fbl_qos::queuesim::Throughput,
    queue_decay: Option<fbl_qos::queuesim::DecayFit>,
    delay_decay: Option<fbl_qos::queuesim::DecayFit>,
    comparison: Option<fbl_qos::queuesim::LdtReport>,
    comparison_error: Option<String>,
}

pub fn simulate(cfg: &RunConfig, opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.simulate, "simulate")?;
    let ctx = cfg.service()?;
    let arrival = cfg.arrival(ctx.mean_service())?;
    let exponent = solve_qos_exponent(&arrival, &ctx, THETA_BRACKET)?;
    let theta = exponent.finite();

    let queue_thresholds = match (&sec.queue_thresholds_bits, &sec.queue_thresholds_theta_units) {
        (Some(g), None) => g.resolve("simulate.queue_thresholds_bits")?,
        (None, Some(g)) => {
            let th = theta.ok_or_else(|| {
                CliError::Config("`simulate.queue_thresholds_theta_units` needs a finite QoS exponent".into())
            })?;
            g.resolve("simulate.queue_thresholds_theta_units")?.into_iter().map(|k| k / th).collect()
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of `simulate.queue_thresholds_bits` and `simulate.queue_thresholds_theta_units`".into(),
            ))
        }
    };
    let seed = seed(cfg, opts);
    let sim = SimConfig {
        model: ctx.model.clone(),
        policy: ctx.policy,
        params: ctx.params,
        arrival,
        arq: ctx.arq,
        n_slots: sec.n_slots,
        warmup: sec.warmup.unwrap_or(10_000),
        seed,
        queue_thresholds,
        delay_thresholds: sec.delay_thresholds_slots.clone(),
        batches: sec.batches.unwrap_or(DEFAULT_BATCHES),
    };
    let replications = sec.replications.unwrap_or(1);
    let res = match replications {
        0 => return Err(CliError::Config("`simulate.replications` must be positive".into())),
        1 => run_sim(&sim)?,
        n => simulate_replications(&sim, n)?,
    };

    let eb = theta.map(|th| effective_bandwidth(&arrival, th)).transpose()?;
    let (comparison, comparison_error) = match (theta, eb) {
        (Some(th), Some(eb)) => {
            let state = QosState {
                theta: th,
                blocklength: ctx.params.blocklength,
                queue_threshold: 0.0,
                delay_bound: 0.0,
                busy_prob: 1.0,
            };
            match compare_ldt(&res.queue, &res.delay, &state, eb, LdtTolerances::default()) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        _ => (None, Some("no finite QoS exponent".to_string())),
    };

    let tail_rows = |t: &fbl_qos::queuesim::TailEstimate, pred: Option<Vec<f64>>| -> Vec<Vec<String>> {
        (0..t.thresholds.len())
            .map(|i| {
                vec![
                    num(t.thresholds[i]),
                    t.counts[i].to_string(),
                    t.samples.to_string(),
                    num(t.probabilities[i]),
                    num(t.ci_lo[i]),
                    num(t.ci_hi[i]),
                    opt(pred.as_ref().map(|p| p[i])),
                ]
            })
            .collect()
    };
    let q_pred = comparison.as_ref().map(|c| c.queue.iter().map(|r| r.predicted).collect());
    let d_pred = comparison.as_ref().map(|c| c.delay.iter().map(|r| r.predicted).collect());
    let mut out = Outputs::default();
    out.csv(
        "queue_tail.csv",
        &["threshold_bits", "count", "samples", "probability", "ci_lo", "ci_hi", "predicted"],
        &tail_rows(&res.queue, q_pred),
    )?;
    out.csv(
        "delay_tail.csv",
        &["threshold_slots", "count", "samples", "probability", "ci_lo", "ci_hi", "predicted"],
        &tail_rows(&res.delay, d_pred),
    )?;
    out.json(
        "simulate.json",
        &SimSummary {
            exponent,
            effective_bandwidth_bits: eb,
            mean_service_bits: ctx.mean_service(),
            seed,
            replications,
            throughput: res.throughput.clone(),
            queue_decay: res.queue.decay,
            delay_decay: res.delay.decay,
            comparison,
            comparison_error,
        },
    )?;
    Ok(out)
}

/// ε_min on an AWGN link; the `channel` and `policy` sections are not used.
pub fn tradeoff(cfg: &RunConfig, _opts: &Opts) -> Result<Outputs, CliError> {
    let sec = cfg.section(&cfg.tradeoff, "tradeoff")?;
    let params = cfg.fbc()?;
    let awgn = ServiceContext::fixed(ChannelModel::awgn(), params)?;
    let arrival = cfg.arrival(awgn.mean_service())?;
    let l = sec.queue_threshold_bits;
    let chis = sec.chi.resolve("tradeoff.chi")?;
    let rows: Vec<Vec<String>> = chis
        .par_iter()
        .map(|&chi| {
            let theta = -chi.ln() / l;
            let eb = if theta > 0.0 { effective_bandwidth(&arrival, theta).ok() } else { Some(arrival.mean()) };
            let (eps, status) = match epsilon_chi_bound(&params, &arrival, l, chi) {
                Ok(e) => (num(e), "ok".to_string()),
                Err(e) => (String::new(), e.to_string()),
            };
            vec![num(chi), num(theta), opt(eb), eps, status]
        })
        .collect();
    let mut out = Outputs::default();
    out.csv("tradeoff.csv", &["chi_th", "theta", "effective_bandwidth_bits", "eps_min", "status"], &rows)?;
    Ok(out)
}
