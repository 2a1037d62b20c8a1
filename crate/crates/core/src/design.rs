//! Experimental designs and their assignment matrices.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignKind {
    /// Switchback: one Bernoulli(p) draw per period, shared by all items.
    SW,
    /// Item-level randomization: one draw per item, held for the horizon.
    IR,
    /// Pairwise randomization: independent draw per item-period cell.
    PR,
    /// Staggered rollout: each item switches to treatment after a random period.
    SR,
}

impl DesignKind {
    pub const ALL: [DesignKind; 4] = [DesignKind::SW, DesignKind::IR, DesignKind::PR, DesignKind::SR];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::SW => "SW",
            DesignKind::IR => "IR",
            DesignKind::PR => "PR",
            DesignKind::SR => "SR",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SW" => Ok(DesignKind::SW),
            "IR" => Ok(DesignKind::IR),
            "PR" => Ok(DesignKind::PR),
            "SR" => Ok(DesignKind::SR),
            other => Err(Error::InvalidDesign(format!("unknown design kind `{other}`"))),
        }
    }
}

/// Shapes for the distribution of the last control period `H_n` of a
/// staggered rollout. Periods are 1-based here, matching `H_n ∈ [1, H]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RolloutShape {
    UniformRange { low: usize, high: usize },
    TwoPoint { first: usize, second: usize },
    PointMass { period: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub p: f64,
    /// `P(H_n = h)` for `h = 1..=H`, staggered rollout only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr_weights: Option<Vec<f64>>,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, p: f64) -> Self {
        Self {
            kind,
            p,
            sr_weights: None,
        }
    }

    pub fn staggered(p: f64, weights: Vec<f64>) -> Self {
        Self {
            kind: DesignKind::SR,
            p,
            sr_weights: Some(weights),
        }
    }

    /// Staggered rollout with `p` set to the treated fraction the weights imply.
    pub fn from_rollout_weights(weights: Vec<f64>) -> Result<Self> {
        let spec = Self::staggered(rollout_fraction(&weights), weights);
        spec.validate(spec.sr_weights.as_ref().map_or(0, Vec::len))?;
        Ok(spec)
    }

    /// The design as run by default in experiments: SW/IR/PR at `p`, and for
    /// SR the two-point rollout around `H(1 - p)`.
    pub fn standard(kind: DesignKind, p: f64, horizon: usize) -> Result<Self> {
        if kind != DesignKind::SR {
            return Ok(Self::new(kind, p));
        }
        let target = horizon as f64 * (1.0 - p);
        let first = (target.floor() as usize).clamp(1, horizon);
        let second = (first + 1).min(horizon);
        let shape = if (target - first as f64).abs() < 1e-12 || first == second {
            RolloutShape::PointMass { period: first }
        } else {
            RolloutShape::TwoPoint { first, second }
        };
        Ok(Self::staggered(p, sr_distribution(p, horizon, shape)?))
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidDesign(format!("p = {} outside [0, 1]", self.p)));
        }
        if self.kind != DesignKind::SR {
            return Ok(());
        }
        let weights = self
            .sr_weights
            .as_ref()
            .ok_or_else(|| Error::InvalidDesign("staggered rollout needs sr_weights".into()))?;
        if weights.len() != horizon {
            return Err(Error::InvalidDesign(format!(
                "sr_weights has {} entries, horizon is {horizon}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDesign("sr_weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDesign(format!("sr_weights sum to {total}, not 1")));
        }
        let implied = rollout_fraction(weights);
        if (implied - self.p).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDesign(format!(
                "sr_weights imply treated fraction {implied}, but p = {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Treated-cell fraction `1 - Σ h·p_h / H` implied by rollout weights.
fn rollout_fraction(weights: &[f64]) -> f64 {
    let horizon = weights.len() as f64;
    let mean: f64 = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (i + 1) as f64 * w)
        .sum();
    1.0 - mean / horizon
}

/// Rollout weights of the given shape whose treated fraction equals `p`.
pub fn sr_distribution(p: f64, horizon: usize, shape: RolloutShape) -> Result<Vec<f64>> {
    let h = horizon as f64;
    let check_period = |period: usize| {
        if period == 0 || period > horizon {
            Err(Error::InvalidDesign(format!(
                "rollout period {period} outside [1, {horizon}]"
            )))
        } else {
            Ok(())
        }
    };
    let mut weights = vec![0.0; horizon];
    match shape {
        RolloutShape::PointMass { period } => {
            check_period(period)?;
            let implied = 1.0 - period as f64 / h;
            if (implied - p).abs() > 1e-12 {
                return Err(Error::Infeasible {
                    target: p,
                    low: implied,
                    high: implied,
                });
            }
            weights[period - 1] = 1.0;
        }
        RolloutShape::UniformRange { low, high } => {
            check_period(low)?;
            check_period(high)?;
            if low > high {
                return Err(Error::InvalidDesign(format!("empty rollout range {low}..={high}")));
            }
            let implied = 1.0 - (low + high) as f64 / (2.0 * h);
            if (implied - p).abs() > 1e-12 {
                return Err(Error::Infeasible {
                    target: p,
                    low: implied,
                    high: implied,
                });
            }
            let mass = 1.0 / (high - low + 1) as f64;
            for w in &mut weights[low - 1..high] {
                *w = mass;
            }
        }
        RolloutShape::TwoPoint { first, second } => {
            check_period(first)?;
            check_period(second)?;
            let (a, b) = (first.min(second), first.max(second));
            if a == b {
                return sr_distribution(p, horizon, RolloutShape::PointMass { period: a });
            }
            let (p_low, p_high) = (1.0 - b as f64 / h, 1.0 - a as f64 / h);
            if p < p_low - 1e-12 || p > p_high + 1e-12 {
                return Err(Error::Infeasible {
                    target: p,
                    low: p_low,
                    high: p_high,
                });
            }
            let upper = ((h * (1.0 - p) - a as f64) / (b - a) as f64).clamp(0.0, 1.0);
            weights[b - 1] = upper;
            weights[a - 1] = 1.0 - upper;
        }
    }
    Ok(weights)
}

/// `P(W_{n,t} = 1)` used by the IPW estimator. Constant across cells: `p` for
/// SW/IR/PR, the overall treated-cell fraction for SR.
pub fn inclusion_probability(design: &DesignSpec) -> f64 {
    match (design.kind, &design.sr_weights) {
        (DesignKind::SR, Some(weights)) => rollout_fraction(weights),
        _ => design.p,
    }
}

/// Binary N×H treatment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    n_items: usize,
    horizon: usize,
    cells: Vec<bool>,
    design: Option<DesignSpec>,
}

impl AssignmentMatrix {
    pub fn from_fn(
        n_items: usize,
        horizon: usize,
        design: Option<DesignSpec>,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut cells = Vec::with_capacity(n_items * horizon);
        for n in 0..n_items {
            for t in 0..horizon {
                cells.push(f(n, t));
            }
        }
        Self {
            n_items,
            horizon,
            cells,
            design,
        }
    }

    /// Global treatment (`true`) or global control (`false`).
    pub fn constant(n_items: usize, horizon: usize, treated: bool) -> Self {
        Self::from_fn(n_items, horizon, None, |_, _| treated)
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::InvalidInput("ragged assignment rows".into()));
        }
        Ok(Self::from_fn(rows.len(), horizon, None, |n, t| rows[n][t]))
    }

    pub fn with_design(mut self, design: DesignSpec) -> Self {
        self.design = Some(design);
        self
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn design(&self) -> Option<&DesignSpec> {
        self.design.as_ref()
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize) -> bool {
        self.cells[n * self.horizon + t]
    }

    pub fn column(&self, t: usize) -> Vec<bool> {
        (0..self.n_items).map(|n| self.get(n, t)).collect()
    }

    pub fn row(&self, n: usize) -> &[bool] {
        &self.cells[n * self.horizon..(n + 1) * self.horizon]
    }

    pub fn treated_cells(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn total_cells(&self) -> usize {
        self.cells.len()
    }

    /// Whether the matrix has the structure its design requires.
    pub fn has_design_structure(&self) -> bool {
        let Some(design) = &self.design else {
            return true;
        };
        match design.kind {
            DesignKind::SW => (0..self.horizon).all(|t| {
                let first = self.get(0, t);
                (1..self.n_items).all(|n| self.get(n, t) == first)
            }),
            DesignKind::IR => (0..self.n_items).all(|n| {
                let row = self.row(n);
                row.iter().all(|c| *c == row[0])
            }),
            DesignKind::PR => true,
            DesignKind::SR => (0..self.n_items).all(|n| self.row(n).windows(2).all(|w| w[0] <= w[1])),
        }
    }
}

/// Draw an assignment matrix for the design.
pub fn generate<R: Rng + ?Sized>(
    design: &DesignSpec,
    n_items: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<AssignmentMatrix> {
    design.validate(horizon)?;
    let p = design.p;
    let bernoulli = |rng: &mut R| rng.random::<f64>() < p;
    let matrix = match design.kind {
        DesignKind::SW => {
            let periods: Vec<bool> = (0..horizon).map(|_| bernoulli(rng)).collect();
            AssignmentMatrix::from_fn(n_items, horizon, None, |_, t| periods[t])
        }
        DesignKind::IR => {
            let items: Vec<bool> = (0..n_items).map(|_| bernoulli(rng)).collect();
            AssignmentMatrix::from_fn(n_items, horizon, None, |n, _| items[n])
        }
        DesignKind::PR => AssignmentMatrix::from_fn(n_items, horizon, None, |_, _| bernoulli(rng)),
        DesignKind::SR => {
            let weights = design.sr_weights.as_deref().expect("validated");
            let last_control: Vec<usize> = (0..n_items).map(|_| draw_period(weights, rng)).collect();
            AssignmentMatrix::from_fn(n_items, horizon, None, |n, t| t + 1 > last_control[n])
        }
    };
    Ok(matrix.with_design(design.clone()))
}

/// 1-based period drawn from rollout weights.
fn draw_period<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w;
        if u < cumulative {
            return i + 1;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).map_or(weights.len(), |i| i + 1)
}
