//! Slot-level fluid FIFO queue driven by the finite-blocklength service,
//! with empirical queue-length and delay tails.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::fbc::FbcParams;
use crate::numerics::linear_fit;
use crate::power::PowerPolicy;
use crate::qos::{dvp_estimate, qvp_estimate, ArrivalProcess, QosState, ServiceContext};

/// Minimum exceedance count for a threshold to enter a decay fit.
pub const MIN_EXCEEDANCES: u64 = 100;
/// Batches used for the effective sample size of the tail intervals.
pub const DEFAULT_BATCHES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub model: ChannelModel,
    pub policy: PowerPolicy,
    pub params: FbcParams,
    pub arrival: ArrivalProcess,
    pub arq: bool,
    /// Horizon in slots (a multiple of T).
    pub n_slots: u64,
    /// Slots discarded before statistics are collected.
    pub warmup: u64,
    pub seed: u64,
    /// Queue thresholds L in bits; P(Q ≥ L) is estimated.
    pub queue_thresholds: Vec<f64>,
    /// Delay thresholds in slots; P(D > d) is estimated.
    pub delay_thresholds: Vec<u64>,
    pub batches: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.policy.validate()?;
        self.params.validate()?;
        self.arrival.validate()?;
        let t = self.model.frame_slots as u64;
        if self.n_slots == 0 || self.n_slots % t != 0 {
            return Err(Error::InvalidParam(format!("horizon {} must be a positive multiple of T = {t}", self.n_slots)));
        }
        if self.n_slots < 10 * self.warmup {
            return Err(Error::InvalidParam(format!("horizon {} must be at least 10x warmup {}", self.n_slots, self.warmup)));
        }
        if self.batches == 0 || (self.n_slots - self.warmup) < self.batches as u64 {
            return Err(Error::InvalidParam("need at least one slot per batch".into()));
        }
        if self.queue_thresholds.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidParam("queue thresholds must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Fitted exponential decay of a tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// −d ln P/d threshold.
    pub rate: f64,
    pub stderr: f64,
    pub r2: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub thresholds: Vec<f64>,
    pub counts: Vec<u64>,
    /// Samples behind every probability.
    pub samples: u64,
    pub probabilities: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub decay: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Throughput {
    pub slots: u64,
    pub mean_arrival: f64,
    pub mean_service: f64,
    /// E{s} from the service model (no clamping).
    pub model_mean_service: f64,
    pub mean_queue: f64,
    pub max_queue: f64,
    pub final_queue: f64,
    /// Fraction of measured slots ending with a non-empty queue.
    pub busy_fraction: f64,
    /// Arrivals still in the queue at the horizon, whose delay is unknown.
    pub censored_delays: u64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub queue: TailEstimate,
    pub delay: TailEstimate,
    pub throughput: Throughput,
}

/// Per-slot hook for traces and invariant checks.
pub trait SlotObserver {
    fn on_slot(&mut self, slot: u64, arrival: f64, service: f64, queue: f64);
}

impl SlotObserver for () {
    fn on_slot(&mut self, _: u64, _: f64, _: f64, _: f64) {}
}

/// Exceedance counts per batch, mergeable across replications.
#[derive(Debug, Clone, PartialEq)]
struct TailCounts {
    thresholds: Vec<f64>,
    /// [batch][threshold].
    batch_counts: Vec<Vec<u64>>,
    batch_samples: Vec<u64>,
}

impl TailCounts {
    fn new(thresholds: Vec<f64>, batches: usize) -> Self {
        let k = thresholds.len();
        Self { thresholds, batch_counts: vec![vec![0; k]; batches], batch_samples: vec![0; batches] }
    }

    /// Counts thresholds with `value` ≥ t (or > t when `strict`).
    fn record(&mut self, batch: usize, value: f64, strict: bool) {
        self.batch_samples[batch] += 1;
        let row = &mut self.batch_counts[batch];
        for (c, &t) in row.iter_mut().zip(&self.thresholds) {
            if value > t || (!strict && value >= t) {
                *c += 1;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.batch_counts.extend(other.batch_counts);
        self.batch_samples.extend(other.batch_samples);
        self
    }

    fn estimate(&self) -> TailEstimate {
        let k = self.thresholds.len();
        let samples: u64 = self.batch_samples.iter().sum();
        let mut counts = vec![0u64; k];
        for row in &self.batch_counts {
            for (c, v) in counts.iter_mut().zip(row) {
                *c += v;
            }
        }
        let mut probabilities = Vec::with_capacity(k);
        let mut ci_lo = Vec::with_capacity(k);
        let mut ci_hi = Vec::with_capacity(k);
        for j in 0..k {
            let p = if samples > 0 { counts[j] as f64 / samples as f64 } else { 0.0 };
            let n_eff = self.effective_n(j, p, samples);
            let (lo, hi) = wilson(p, n_eff);
            probabilities.push(p);
            ci_lo.push(lo);
            ci_hi.push(hi);
        }
        let decay = fit_decay(&self.thresholds, &counts, &probabilities);
        TailEstimate { thresholds: self.thresholds.clone(), counts, samples, probabilities, ci_lo, ci_hi, decay }
    }

    /// Sample size that makes the binomial variance match the spread of
    /// the batch proportions.
    fn effective_n(&self, j: usize, p: f64, samples: u64) -> f64 {
        let props: Vec<(f64, f64)> = self
            .batch_counts
            .iter()
            .zip(&self.batch_samples)
            .filter(|(_, n)| **n > 0)
            .map(|(row, n)| (row[j] as f64 / *n as f64, *n as f64))
            .collect();
        let b = props.len() as f64;
        if b < 2.0 || p <= 0.0 || p >= 1.0 {
            return samples as f64;
        }
        let var = props.iter().map(|(q, _)| (q - p) * (q - p)).sum::<f64>() / (b - 1.0);
        if var <= 0.0 {
            return samples as f64;
        }
        (b * p * (1.0 - p) / var).min(samples as f64).max(1.0)
    }
}

/// 95% Wilson score interval.
fn wilson(p: f64, n: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let z2n = z * z / n;
    let centre = (p + 0.5 * z2n) / (1.0 + z2n);
    let half = z * (p * (1.0 - p) / n + 0.25 * z2n / n).sqrt() / (1.0 + z2n);
    let lo = if p <= 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if p >= 1.0 { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Least squares of ln P on the threshold, over positive thresholds with
/// enough exceedances, dropping the top decile of the grid.
fn fit_decay(thresholds: &[f64], counts: &[u64], probs: &[f64]) -> Option<DecayFit> {
    let k = thresholds.len();
    let keep = k - k / 10;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..keep)
        .filter(|&j| thresholds[j] > 0.0 && counts[j] >= MIN_EXCEEDANCES)
        .map(|j| (thresholds[j], probs[j].ln()))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let fit = linear_fit(&xs, &ys).ok()?;
    Some(DecayFit { rate: -fit.slope, stderr: fit.slope_stderr, r2: fit.r2, points_used: xs.len() })
}

struct Pending {
    slot: u64,
    target: f64,
}

struct Replication {
    queue: TailCounts,
    delay: TailCounts,
    arrivals: f64,
    service: f64,
    queue_sum: f64,
    busy: u64,
    measured: u64,
    max_queue: f64,
    final_queue: f64,
    censored: u64,
}

/// Runs one replication, reporting every slot to `observer`.
pub fn simulate_with<O: SlotObserver>(config: &SimConfig, observer: &mut O) -> Result<SimResult> {
    config.validate()?;
    let ctx = ServiceContext::new(config.model.clone(), config.policy, config.params, config.arq)?;
    let rep = run(config, &ctx, config.seed, observer);
    Ok(finish(config, &ctx, vec![rep]))
}

pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    simulate_with(config, &mut ())
}

/// Independent replications in parallel with seeds derived from
/// `config.seed`; tail counts are pooled.
pub fn simulate_replications(config: &SimConfig, replications: usize) -> Result<SimResult> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::InvalidParam("need at least one replication".into()));
    }
    let ctx = ServiceContext::new(config.model.clone(), config.policy, config.params, config.arq)?;
    let reps: Vec<Replication> = (0..replications as u64)
        .into_par_iter()
        .map(|i| run(config, &ctx, derive_seed(config.seed, i), &mut ()))
        .collect();
    Ok(finish(config, &ctx, reps))
}

/// SplitMix64 step, so replication streams are unrelated.
fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cumulative service is rebased once it passes this many bits.
const REBASE_AT: f64 = 1e7;

fn run<O: SlotObserver>(config: &SimConfig, ctx: &ServiceContext, seed: u64, observer: &mut O) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = config.model.frame_slots as u64;
    let eps = config.params.error_prob;
    let measured_slots = config.n_slots - config.warmup;
    let batches = config.batches;
    let batch_of = |slot: u64| (((slot - config.warmup) as u128 * batches as u128) / measured_slots as u128) as usize;
    let delay_thresholds: Vec<f64> = config.delay_thresholds.iter().map(|&d| d as f64).collect();
    let mut rep = Replication {
        queue: TailCounts::new(config.queue_thresholds.clone(), batches),
        delay: TailCounts::new(delay_thresholds, batches),
        arrivals: 0.0,
        service: 0.0,
        queue_sum: 0.0,
        busy: 0,
        measured: 0,
        max_queue: 0.0,
        final_queue: 0.0,
        censored: 0,
    };
    let mut q = 0.0_f64;
    let mut s = 0.0_f64;
    // Cumulative service through the previous slot, relative to a base.
    let mut cum = 0.0_f64;
    let mut pending: VecDeque<Pending> = VecDeque::new();
    for n in 0..config.n_slots {
        if n % t == 0 {
            let g = ctx.model.sample_gain(&mut rng);
            let failed = config.arq && rng.random::<f64>() < eps;
            s = if failed { 0.0 } else { ctx.service_bits(g).max(0.0) };
        }
        let a = config.arrival.sample(&mut rng);
        let backlog = q + a;
        let measuring = n >= config.warmup;
        if measuring {
            if backlog > 0.0 {
                pending.push_back(Pending { slot: n, target: cum + backlog });
            } else {
                rep.delay.record(batch_of(n), 0.0, true);
            }
        }
        q = (backlog - s).max(0.0);
        cum += s;
        while let Some(front) = pending.front() {
            if front.target <= cum * (1.0 + 1e-12) {
                let d = n - front.slot + 1;
                rep.delay.record(batch_of(front.slot), d as f64, true);
                pending.pop_front();
            } else {
                break;
            }
        }
        if cum > REBASE_AT {
            for p in pending.iter_mut() {
                p.target -= cum;
            }
            cum = 0.0;
        }
        observer.on_slot(n, a, s, q);
        if measuring {
            rep.queue.record(batch_of(n), q, false);
            rep.arrivals += a;
            rep.service += s;
            rep.queue_sum += q;
            rep.measured += 1;
            if q > 0.0 {
                rep.busy += 1;
            }
            rep.max_queue = rep.max_queue.max(q);
        }
    }
    rep.final_queue = q;
    rep.censored = pending.len() as u64;
    rep
}

fn finish(config: &SimConfig, ctx: &ServiceContext, reps: Vec<Replication>) -> SimResult {
    let n_reps = reps.len() as f64;
    let mut it = reps.into_iter();
    let first = it.next().expect("at least one replication");
    let mut acc = first;
    let mut final_queue_sum = acc.final_queue;
    for r in it {
        acc.queue = acc.queue.merge(r.queue);
        acc.delay = acc.delay.merge(r.delay);
        acc.arrivals += r.arrivals;
        acc.service += r.service;
        acc.queue_sum += r.queue_sum;
        acc.busy += r.busy;
        acc.measured += r.measured;
        acc.max_queue = acc.max_queue.max(r.max_queue);
        acc.censored += r.censored;
        final_queue_sum += r.final_queue;
    }
    let m = acc.measured.max(1) as f64;
    let mu_a = config.arrival.mean();
    let mu_s = ctx.mean_service();
    let warning = (mu_a >= mu_s).then(|| {
        format!("unstable: mean arrival {mu_a} >= mean service {mu_s}; queue grows without bound")
    });
    SimResult {
        queue: acc.queue.estimate(),
        delay: acc.delay.estimate(),
        throughput: Throughput {
            slots: acc.measured,
            mean_arrival: acc.arrivals / m,
            mean_service: acc.service / m,
            model_mean_service: mu_s,
            mean_queue: acc.queue_sum / m,
            max_queue: acc.max_queue,
            final_queue: final_queue_sum / n_reps,
            busy_fraction: acc.busy as f64 / m,
            censored_delays: acc.censored,
            warning,
        },
    }
}

/// Tolerances for [`compare_ldt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdtTolerances {
    /// |fitted decay / θ − 1| allowed.
    pub decay_rel: f64,
    /// Allowed factor between empirical and predicted δ.
    pub delay_factor: f64,
    /// Predicted δ range over which the delay check applies.
    pub delay_range: (f64, f64),
}

impl Default for LdtTolerances {
    fn default() -> Self {
        Self { decay_rel: 0.10, delay_factor: 3.0, delay_range: (1e-4, 1e-2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailComparison {
    pub threshold: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdtReport {
    pub theta: f64,
    pub fitted_decay: f64,
    pub decay_ratio: f64,
    pub queue: Vec<TailComparison>,
    pub delay: Vec<TailComparison>,
    pub decay_pass: bool,
    pub delay_pass: bool,
    /// Delay thresholds whose prediction fell in the checked range.
    pub delay_checked: usize,
    pub pass: bool,
}

/// Compares simulated tails with χ ≈ η·e^{−θL} and δ ≈ e^{−θ·α_A(θ)·D}.
pub fn compare_ldt(
    queue: &TailEstimate,
    delay: &TailEstimate,
    state: &QosState,
    eb_at_theta: f64,
    tol: LdtTolerances,
) -> Result<LdtReport> {
    let fit = queue.decay.ok_or(Error::InsufficientExceedances { needed: MIN_EXCEEDANCES })?;
    let decay_ratio = fit.rate / state.theta;
    let cmp = |thresholds: &[f64], probs: &[f64], pred: &dyn Fn(f64) -> f64| -> Vec<TailComparison> {
        thresholds
            .iter()
            .zip(probs)
            .map(|(&t, &p)| {
                let predicted = pred(t);
                TailComparison { threshold: t, empirical: p, predicted, ratio: p / predicted }
            })
            .collect()
    };
    let q_rows = cmp(&queue.thresholds, &queue.probabilities, &|l| qvp_estimate(&QosState { queue_threshold: l, ..*state }));
    let d_rows = cmp(&delay.thresholds, &delay.probabilities, &|d| {
        dvp_estimate(&QosState { delay_bound: d, ..*state }, eb_at_theta)
    });
    let (lo, hi) = tol.delay_range;
    let checked: Vec<&TailComparison> = d_rows.iter().filter(|r| r.predicted >= lo && r.predicted <= hi).collect();
    let delay_pass =
        !checked.is_empty() && checked.iter().all(|r| r.ratio >= 1.0 / tol.delay_factor && r.ratio <= tol.delay_factor);
    let delay_checked = checked.len();
    let decay_pass = (decay_ratio - 1.0).abs() <= tol.decay_rel;
    Ok(LdtReport {
        theta: state.theta,
        fitted_decay: fit.rate,
        decay_ratio,
        queue: q_rows,
        delay: d_rows,
        decay_pass,
        delay_pass,
        delay_checked,
        pass: decay_pass && delay_pass,
    })
}
