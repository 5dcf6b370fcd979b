//! Distributions of the channel power gain |h|² and frame-level sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::specfun::{ln_gamma, regularized_gamma_p};

/// Law of the power gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    /// |h|² ≡ 1.
    Awgn,
    /// Exponential gain with mean `omega`.
    Rayleigh { omega: f64 },
    /// Gamma(m, Ω/m) gain.
    Nakagami { m: f64, omega: f64 },
    /// Maximum-ratio combining of `kappa` unit-mean Rayleigh branches.
    RayleighDiversity { kappa: u32 },
    /// Finite support with the given probabilities.
    Discrete { gains: Vec<f64>, probs: Vec<f64> },
}

/// A gain law together with the frame length T (slots per i.i.d. draw).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelModel {
    pub fading: Fading,
    pub frame_slots: u32,
}

impl ChannelModel {
    pub fn new(fading: Fading, frame_slots: u32) -> Result<Self> {
        let model = Self { fading, frame_slots };
        model.validate()?;
        Ok(model)
    }

    pub fn awgn() -> Self {
        Self { fading: Fading::Awgn, frame_slots: 1 }
    }

    pub fn rayleigh() -> Self {
        Self { fading: Fading::Rayleigh { omega: 1.0 }, frame_slots: 1 }
    }

    pub fn nakagami(m: f64, omega: f64) -> Result<Self> {
        Self::new(Fading::Nakagami { m, omega }, 1)
    }

    pub fn diversity(kappa: u32) -> Result<Self> {
        Self::new(Fading::RayleighDiversity { kappa }, 1)
    }

    pub fn discrete(gains: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::new(Fading::Discrete { gains, probs }, 1)
    }

    pub fn with_frame_slots(mut self, t: u32) -> Result<Self> {
        self.frame_slots = t;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_slots == 0 {
            return Err(Error::InvalidModel("frame length T must be at least 1".into()));
        }
        match &self.fading {
            Fading::Awgn => Ok(()),
            Fading::Rayleigh { omega } => positive("omega", *omega),
            Fading::Nakagami { m, omega } => {
                if !(*m >= 0.5) || !m.is_finite() {
                    return Err(Error::InvalidModel(format!("Nakagami m must be >= 0.5, got {m}")));
                }
                positive("omega", *omega)
            }
            Fading::RayleighDiversity { kappa } => {
                if *kappa == 0 {
                    Err(Error::InvalidModel("diversity order must be positive".into()))
                } else {
                    Ok(())
                }
            }
            Fading::Discrete { gains, probs } => {
                if gains.is_empty() || gains.len() != probs.len() {
                    return Err(Error::InvalidModel("discrete gains and probs must be non-empty and equal length".into()));
                }
                if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err(Error::InvalidModel("discrete gains must be finite and nonnegative".into()));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return Err(Error::InvalidModel("discrete probabilities must be positive".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!("discrete probabilities sum to {s}")));
                }
                Ok(())
            }
        }
    }

    /// (shape, scale) of the Gamma law for the continuous models.
    pub fn gamma_shape_scale(&self) -> Option<(f64, f64)> {
        match &self.fading {
            Fading::Rayleigh { omega } => Some((1.0, *omega)),
            Fading::Nakagami { m, omega } => Some((*m, omega / m)),
            Fading::RayleighDiversity { kappa } => Some((*kappa as f64, 1.0)),
            _ => None,
        }
    }

    /// Nakagami shape m governing the high-SNR behaviour; `None` for
    /// point-mass and discrete laws.
    pub fn shape_m(&self) -> Option<f64> {
        self.gamma_shape_scale().map(|(m, _)| m)
    }

    pub fn is_continuous(&self) -> bool {
        self.gamma_shape_scale().is_some()
    }

    /// Atoms (gain, probability) of the non-continuous laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.fading {
            Fading::Awgn => Some(vec![(1.0, 1.0)]),
            Fading::Discrete { gains, probs } => Some(gains.iter().copied().zip(probs.iter().copied()).collect()),
            _ => None,
        }
    }

    /// ln f(x); −∞ where the density vanishes.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let Some((m, scale)) = self.gamma_shape_scale() else {
            return f64::NEG_INFINITY;
        };
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return if m < 1.0 {
                f64::INFINITY
            } else if m == 1.0 {
                -scale.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        (m - 1.0) * x.ln() - x / scale - m * scale.ln() - ln_gamma(m)
    }

    /// Density of the gain. Point-mass laws have none.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain { what: "gain", value: x });
        }
        self.validate()?;
        if !self.is_continuous() {
            return Err(Error::Degenerate("gain law has no density (point masses)".into()));
        }
        Ok(self.ln_pdf(x).exp())
    }

    /// P(|h|² ≤ x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain { what: "gain", value: x });
        }
        if x < 0.0 {
            return Ok(0.0);
        }
        if let Some((m, scale)) = self.gamma_shape_scale() {
            return Ok(regularized_gamma_p(m, x / scale));
        }
        let atoms = self.atoms().unwrap_or_default();
        Ok(atoms.iter().filter(|(g, _)| *g <= x).map(|(_, p)| p).sum())
    }

    pub fn mean(&self) -> f64 {
        if let Some((m, scale)) = self.gamma_shape_scale() {
            return m * scale;
        }
        self.atoms().unwrap_or_default().iter().map(|(g, p)| g * p).sum()
    }

    pub fn variance(&self) -> f64 {
        if let Some((m, scale)) = self.gamma_shape_scale() {
            return m * scale * scale;
        }
        let mu = self.mean();
        self.atoms().unwrap_or_default().iter().map(|(g, p)| p * (g - mu) * (g - mu)).sum()
    }

    /// Range of ln x that carries all of the probability mass that can
    /// matter numerically, for log-space quadrature.
    pub fn log_support(&self) -> (f64, f64) {
        let (m, scale) = self.gamma_shape_scale().unwrap_or((1.0, 1.0));
        let lo = (scale.ln() - 700.0 / m).max(-690.0);
        let hi = (scale * (m + 90.0 + 15.0 * m.sqrt())).ln();
        (lo, hi)
    }

    /// One gain draw.
    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.fading {
            Fading::Awgn => 1.0,
            Fading::Rayleigh { omega } => omega * <Exp1 as Distribution<f64>>::sample(&Exp1, rng),
            Fading::Nakagami { m, omega } => Gamma::new(*m, omega / m).expect("validated").sample(rng),
            Fading::RayleighDiversity { kappa } => {
                (0..*kappa).map(|_| <Exp1 as Distribution<f64>>::sample(&Exp1, rng)).sum()
            }
            Fading::Discrete { gains, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (g, p) in gains.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *g;
                    }
                }
                *gains.last().expect("validated")
            }
        }
    }

    /// `n_frames` i.i.d. gains, one per frame, deterministic in `seed`.
    pub fn sample_frames(&self, n_frames: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Fading::Nakagami { m, omega } = &self.fading {
            let dist = Gamma::new(*m, omega / m).expect("validated");
            return (0..n_frames).map(|_| dist.sample(&mut rng)).collect();
        }
        (0..n_frames).map(|_| self.sample_gain(&mut rng)).collect()
    }

    /// Repeats each frame gain T times.
    pub fn expand_to_slots(&self, frames: &[f64]) -> Vec<f64> {
        let t = self.frame_slots as usize;
        frames.iter().flat_map(|&g| std::iter::repeat_n(g, t)).collect()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive, got {v}")))
    }
}
