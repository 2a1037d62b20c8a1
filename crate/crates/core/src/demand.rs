//! Demand processes.
//!
//! Each item's demand in period `t` is a deterministic mean shift
//! `k·t + A_n·sin(2π(t + φ_n)/7)` plus an independent noise draw from the
//! item's noise family, optionally clamped at zero. Periods are passed as
//! 0-based indices everywhere; the shift formula uses the 1-based period.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Length of the seasonal cycle, in periods.
pub const SEASON_LENGTH: f64 = 7.0;

const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    Normal { mean: f64, std_dev: f64 },
    /// Uniform on `[low, low + width]`.
    Uniform { low: f64, width: f64 },
    Discrete {
        support: Vec<f64>,
        probabilities: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemDemand {
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    pub noise: Noise,
}

impl ItemDemand {
    pub fn new(noise: Noise) -> Self {
        Self {
            amplitude: 0.0,
            phase: 0.0,
            noise,
        }
    }

    pub fn seasonal(noise: Noise, amplitude: f64, phase: f64) -> Self {
        Self {
            amplitude,
            phase,
            noise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandModel {
    #[serde(default)]
    pub trend_slope: f64,
    pub items: Vec<ItemDemand>,
    #[serde(default = "default_clamp")]
    pub clamp_at_zero: bool,
}

fn default_clamp() -> bool {
    true
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        match self {
            Noise::Normal { mean, std_dev } => {
                if !mean.is_finite() || !(std_dev.is_finite() && *std_dev > 0.0) {
                    return invalid(format!(
                        "normal noise needs finite mean and std_dev > 0, got ({mean}, {std_dev})"
                    ));
                }
            }
            Noise::Uniform { low, width } => {
                if !low.is_finite() || !(width.is_finite() && *width > 0.0) {
                    return invalid(format!(
                        "uniform noise needs finite low and width > 0, got ({low}, {width})"
                    ));
                }
            }
            Noise::Discrete {
                support,
                probabilities,
            } => {
                if support.is_empty() || support.len() != probabilities.len() {
                    return invalid("discrete noise needs matching, nonempty support and probabilities");
                }
                if support.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return invalid("discrete support must be finite and nonnegative");
                }
                if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return invalid("discrete probabilities must be nonnegative");
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return invalid(format!("discrete probabilities sum to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    /// `E(s - X)^+` for the unshifted, unclamped noise variable `X`.
    fn overage(&self, s: f64) -> f64 {
        match self {
            Noise::Normal { mean, std_dev } => {
                let z = (s - mean) / std_dev;
                let unit = std_normal();
                (s - mean) * unit.cdf(z) + std_dev * unit.pdf(z)
            }
            Noise::Uniform { low, width } => {
                if s <= *low {
                    0.0
                } else if s >= low + width {
                    s - (low + width / 2.0)
                } else {
                    (s - low) * (s - low) / (2.0 * width)
                }
            }
            Noise::Discrete {
                support,
                probabilities,
            } => support
                .iter()
                .zip(probabilities)
                .map(|(x, p)| p * (s - x).max(0.0))
                .sum(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            Noise::Normal { mean, std_dev } => std_normal().cdf((x - mean) / std_dev),
            Noise::Uniform { low, width } => ((x - low) / width).clamp(0.0, 1.0),
            Noise::Discrete {
                support,
                probabilities,
            } => support
                .iter()
                .zip(probabilities)
                .filter(|(v, _)| **v <= x)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    fn quantile(&self, q: f64) -> f64 {
        match self {
            Noise::Normal { mean, std_dev } => mean + std_dev * std_normal().inverse_cdf(q),
            Noise::Uniform { low, width } => low + q * width,
            Noise::Discrete {
                support,
                probabilities,
            } => {
                let mut atoms: Vec<(f64, f64)> =
                    support.iter().copied().zip(probabilities.iter().copied()).collect();
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cumulative = 0.0;
                for (value, prob) in &atoms {
                    cumulative += prob;
                    if cumulative >= q - 1e-12 {
                        return *value;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }

    fn infimum(&self) -> f64 {
        match self {
            Noise::Normal { .. } => f64::NEG_INFINITY,
            Noise::Uniform { low, .. } => *low,
            Noise::Discrete { support, .. } => support.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal { mean, std_dev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std_dev * z
            }
            Noise::Uniform { low, width } => low + width * rng.random::<f64>(),
            Noise::Discrete {
                support,
                probabilities,
            } => {
                let u: f64 = rng.random();
                let mut cumulative = 0.0;
                for (value, prob) in support.iter().zip(probabilities) {
                    cumulative += prob;
                    if u < cumulative {
                        return *value;
                    }
                }
                // Rounding left the cumulative sum a hair under 1.
                *support.last().expect("validated nonempty")
            }
        }
    }
}

impl DemandModel {
    pub fn new(items: Vec<ItemDemand>) -> Result<Self> {
        let model = Self {
            trend_slope: 0.0,
            items,
            clamp_at_zero: true,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_trend(mut self, slope: f64) -> Self {
        self.trend_slope = slope;
        self
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_at_zero = clamp;
        self
    }

    /// Same noise for every item, no trend or seasonality.
    pub fn stationary(n_items: usize, noise: Noise) -> Result<Self> {
        Self::new(vec![ItemDemand::new(noise); n_items])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.trend_slope.is_finite() {
            return invalid("trend slope must be finite");
        }
        for (n, item) in self.items.iter().enumerate() {
            if !(item.amplitude.is_finite() && item.amplitude >= 0.0) || !item.phase.is_finite() {
                return invalid(format!("item {n}: amplitude must be ≥ 0 and phase finite"));
            }
            item.noise.validate()?;
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_discrete(&self) -> bool {
        self.items
            .iter()
            .all(|i| matches!(i.noise, Noise::Discrete { .. }))
    }

    pub fn mean_shift(&self, n: usize, t: usize) -> f64 {
        let item = &self.items[n];
        let period = (t + 1) as f64;
        self.trend_slope * period
            + item.amplitude * (2.0 * PI * (period + item.phase) / SEASON_LENGTH).sin()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, t: usize, rng: &mut R) -> f64 {
        let value = self.mean_shift(n, t) + self.items[n].noise.draw(rng);
        if self.clamp_at_zero {
            value.max(0.0)
        } else {
            value
        }
    }

    /// Full N×H demand matrix, indexed `[item][period]`. Draws are taken
    /// period by period, items in order within a period.
    pub fn sample_trace<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let mut trace = vec![vec![0.0; horizon]; self.n_items()];
        for t in 0..horizon {
            for (n, row) in trace.iter_mut().enumerate() {
                row[t] = self.sample(n, t, rng);
            }
        }
        trace
    }

    pub fn essential_infimum(&self, n: usize, t: usize) -> f64 {
        let inf = self.items[n].noise.infimum() + self.mean_shift(n, t);
        if self.clamp_at_zero {
            inf.max(0.0)
        } else {
            inf
        }
    }

    /// `E(s - D)^+` for item `n` in period `t`.
    pub fn expected_overage(&self, n: usize, t: usize, s: f64) -> f64 {
        let item = &self.items[n];
        let shift = self.mean_shift(n, t);
        if let Some(atoms) = self.outcomes(n, t) {
            return atoms.iter().map(|(d, p)| p * (s - d).max(0.0)).sum();
        }
        if self.clamp_at_zero {
            if s <= 0.0 {
                return 0.0;
            }
            // For s ≥ 0: (s - max(X, 0))^+ = (s - X)^+ - (-X)^+ pointwise.
            (item.noise.overage(s - shift) - item.noise.overage(-shift)).max(0.0)
        } else {
            item.noise.overage(s - shift)
        }
    }

    /// `P(D ≤ x)` for item `n` in period `t`.
    pub fn cdf(&self, n: usize, t: usize, x: f64) -> f64 {
        if self.clamp_at_zero && x < 0.0 {
            return 0.0;
        }
        self.items[n].noise.cdf(x - self.mean_shift(n, t))
    }

    /// Generalised inverse c.d.f. `inf { x : F(x) ≥ q }`.
    pub fn quantile(&self, n: usize, t: usize, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return invalid(format!("quantile level must lie in (0, 1), got {q}"));
        }
        let shift = self.mean_shift(n, t);
        let noise = &self.items[n].noise;
        if self.clamp_at_zero && noise.cdf(-shift) >= q {
            return Ok(0.0);
        }
        Ok(noise.quantile(q) + shift)
    }

    /// Outcome atoms `(value, probability)` of a discrete demand after
    /// shifting and clamping; `None` for continuous families.
    pub fn outcomes(&self, n: usize, t: usize) -> Option<Vec<(f64, f64)>> {
        let Noise::Discrete {
            support,
            probabilities,
        } = &self.items[n].noise
        else {
            return None;
        };
        let shift = self.mean_shift(n, t);
        Some(
            support
                .iter()
                .zip(probabilities)
                .filter(|(_, p)| **p > 0.0)
                .map(|(x, p)| {
                    let d = x + shift;
                    (if self.clamp_at_zero { d.max(0.0) } else { d }, *p)
                })
                .collect(),
        )
    }
}
