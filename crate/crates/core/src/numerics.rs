//! Quadrature, bracketing root finding, one-dimensional maximization and
//! least squares helpers shared by the analysis modules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_36,
    0.295_524_224_714_752_87,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// 21-point Gauss–Kronrod rule on [a, b] with the QUADPACK error scaling.
fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = 0.0;
    let mut resk = WGK[10] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration over consecutive pieces
/// `points[0]..points[1]..…`. Breakpoints should sit on kinks and peaks.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_pieces: usize,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::InvalidParam("integration needs two endpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let (v, e) = qk21(&f, w[0], w[1]);
        evaluations += 21;
        value += v;
        error += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e });
    }
    // The qk21 error floor is 50·eps per piece; asking for less only burns pieces.
    let rel_tol = rel_tol.max(100.0 * f64::EPSILON);
    let mut frozen_error = 0.0;
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= max_pieces {
            return Err(Error::Quadrature { a: points[0], b: points[points.len() - 1], estimate: value, error });
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) || (p.b - p.a) < 1e-14 * p.a.abs().max(p.b.abs()) {
            // Cannot split further; keep its contribution as is.
            frozen_error += p.error;
            error -= p.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let (v1, e1) = qk21(&f, p.a, mid);
        let (v2, e2) = qk21(&f, mid, p.b);
        evaluations += 42;
        value += v1 + v2 - p.value;
        error += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: p.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let mut total = 0.0;
    let mut total_err = frozen_error;
    for p in heap.iter() {
        total += p.value;
        total_err += p.error;
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { a: points[0], b: points[points.len() - 1], estimate: total, error: total_err });
    }
    Ok(QuadResult { value: total, error: total_err, evaluations })
}

/// Adaptive integration of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadResult> {
    integrate_pieces(f, &[a, b], rel_tol, abs_tol, 4000)
}

/// Logarithm of ∫ exp(h(t)) dt over [t_lo, t_hi] for a log-integrand `h`
/// that may span hundreds of orders of magnitude.
///
/// `h` is scanned on a uniform grid (and at `key_points`) to find its
/// maximum; the integration window is cut where `h` falls more than
/// `LOG_WINDOW` below it. Returns (ln integral, relative error).
pub fn log_integrate_exp<H: Fn(f64) -> f64>(
    h: H,
    t_lo: f64,
    t_hi: f64,
    key_points: &[f64],
    rel_tol: f64,
) -> Result<(f64, f64)> {
    const LOG_WINDOW: f64 = 48.0;
    const STEP: f64 = 0.125;
    let n = (((t_hi - t_lo) / STEP).ceil() as usize).max(2);
    let step = (t_hi - t_lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| t_lo + step * i as f64).collect();
    let hv: Vec<f64> = grid.iter().map(|&t| h(t)).collect();
    let keys: Vec<f64> = key_points.iter().copied().filter(|t| *t > t_lo && *t < t_hi).collect();
    let hk: Vec<f64> = keys.iter().map(|&t| h(t)).collect();
    let hmax = hv.iter().chain(&hk).copied().fold(f64::NEG_INFINITY, f64::max);
    if !hmax.is_finite() {
        return Err(Error::Quadrature { a: t_lo, b: t_hi, estimate: hmax, error: f64::NAN });
    }
    let cut = hmax - LOG_WINDOW;
    let mut first = None;
    let mut last = 0;
    for (i, &v) in hv.iter().enumerate() {
        if v >= cut {
            if first.is_none() {
                first = Some(i);
            }
            last = i;
        }
    }
    let mut lo = grid[first.unwrap_or(0).saturating_sub(1)];
    let mut hi = grid[(last + 1).min(n)];
    for (&k, &v) in keys.iter().zip(&hk) {
        if v >= cut {
            lo = lo.min(k - step);
            hi = hi.max(k + step);
        }
    }
    lo = lo.max(t_lo);
    hi = hi.min(t_hi);
    let mut points = vec![lo, hi];
    points.extend(keys.iter().copied().filter(|&k| k > lo && k < hi));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let res = integrate_pieces(|t| (h(t) - hmax).exp(), &points, rel_tol, 0.0, 20_000)?;
    if !(res.value > 0.0) {
        return Err(Error::Quadrature { a: lo, b: hi, estimate: res.value, error: res.error });
    }
    Ok((hmax + res.value.ln(), res.error / res.value))
}

/// Bisection for a sign change of `f` on [lo, hi]. Stops when the bracket
/// width falls below `rel_tol`·max(|lo|, |hi|) or cannot shrink further.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoSignChange { lo, hi, f_lo: flo, f_hi: fhi });
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= rel_tol * lo.abs().max(hi.abs()) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { what: "bisection", iterations: max_iter })
}

/// Golden-section search for the maximum of a unimodal `f` on [a, b].
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Ordinary least squares fit y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InvalidParam("linear fit needs at least two paired points".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("linear fit with constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, r2, slope_stderr })
}

/// Nodes and weights for E[g(Z)], Z standard normal, by the n-point
/// Gauss–Hermite rule. Roots of the orthonormal Hermite polynomial are
/// bracketed on a fine grid and bisected, which stays reliable for large
/// n where Newton from asymptotic guesses jumps between roots.
pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    let nf = n as f64;
    // (p_n(z), p_n'(z)) for the orthonormal physicists' polynomials.
    let eval = |z: f64| {
        let mut p1 = PIM4;
        let mut p2 = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        }
        (p1, (2.0 * nf).sqrt() * p2)
    };
    let step = 0.5 * std::f64::consts::PI / (2.0 * nf).sqrt() / 20.0;
    let top = (2.0 * nf + 1.0).sqrt() + 1.0;
    let mut roots = Vec::with_capacity(n.div_ceil(2));
    if n % 2 == 1 {
        roots.push(0.0);
    }
    let mut za = if n % 2 == 1 { 0.5 * step } else { 0.0 };
    let mut fa = eval(za).0;
    while za < top {
        let zb = za + step;
        let fb = eval(zb).0;
        if fa.signum() != fb.signum() {
            let (mut lo, mut hi, mut flo) = (za, zb, fa);
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = eval(mid).0;
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        za = zb;
        fa = fb;
    }
    let s2 = std::f64::consts::SQRT_2;
    let rpi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &r in &roots {
        let pp = eval(r).1;
        let w = 2.0 / (pp * pp) / rpi;
        pairs.push((r * s2, w));
        if r > 0.0 {
            pairs.push((-r * s2, w));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Numerically stable ln(e^a + e^b).
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// ln Σ exp(vᵢ).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `n` points evenly spaced in log scale from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}
