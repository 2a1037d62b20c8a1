//! GTE estimators and true-GTE references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{AssignmentMatrix, DesignKind};
use crate::error::{invalid, Error, Result};
use crate::inventory::{simulate_horizon, Scenario, SimTrace};
use crate::stats::SampleSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ipw,
    DiffInMeans,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Ipw, EstimatorKind::DiffInMeans];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::DiffInMeans => "dim",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub value: f64,
    pub design: Option<DesignKind>,
    pub replication: Option<usize>,
}

impl EstimateResult {
    fn new(value: f64, w: &AssignmentMatrix) -> Self {
        Self {
            value,
            design: w.design().map(|d| d.kind),
            replication: None,
        }
    }
}

/// Per-cell IPW coefficient `W/p - (1 - W)/(1 - p)`.
#[inline]
pub fn ipw_weight(treated: bool, p: f64) -> f64 {
    if treated {
        1.0 / p
    } else {
        -1.0 / (1.0 - p)
    }
}

fn check_dims(trace: &SimTrace, w: &AssignmentMatrix) -> Result<()> {
    if trace.n_items() != w.n_items() || trace.horizon() != w.horizon() {
        return invalid(format!(
            "trace is {}×{}, assignment is {}×{}",
            trace.n_items(),
            trace.horizon(),
            w.n_items(),
            w.horizon()
        ));
    }
    Ok(())
}

/// `(1/NH) Σ [W R / p - (1 - W) R / (1 - p)]`.
pub fn ipw_estimate(trace: &SimTrace, w: &AssignmentMatrix, p: f64) -> Result<EstimateResult> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("IPW needs p in (0, 1), got {p}"));
    }
    check_dims(trace, w)?;
    let mut total = 0.0;
    for n in 0..w.n_items() {
        for t in 0..w.horizon() {
            total += ipw_weight(w.get(n, t), p) * trace.profit(n, t);
        }
    }
    Ok(EstimateResult::new(total / w.total_cells() as f64, w))
}

/// Mean profit over treated cells minus mean profit over control cells.
pub fn diff_in_means(trace: &SimTrace, w: &AssignmentMatrix) -> Result<EstimateResult> {
    check_dims(trace, w)?;
    // (sum, count) per arm
    let (mut treated, mut control) = ((0.0, 0usize), (0.0, 0usize));
    for n in 0..w.n_items() {
        for t in 0..w.horizon() {
            let arm = if w.get(n, t) { &mut treated } else { &mut control };
            arm.0 += trace.profit(n, t);
            arm.1 += 1;
        }
    }
    if treated.1 == 0 || control.1 == 0 {
        return Err(Error::UndefinedEstimator(
            "difference in means needs at least one treated and one control cell".into(),
        ));
    }
    Ok(EstimateResult::new(treated.0 / treated.1 as f64 - control.0 / control.1 as f64, w))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GteMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GteReference {
    pub value: f64,
    pub method: GteMethod,
    /// 95% half-width, Monte Carlo only.
    pub ci_halfwidth: Option<f64>,
    pub reps: Option<usize>,
}

/// `E R⁺(s, D_{n,t}) = (r - c)(s - E(s - D)^+)`.
pub(crate) fn expected_profit_plus(scenario: &Scenario, n: usize, t: usize, level: f64) -> f64 {
    scenario.items()[n].margin() * (level - scenario.demand().expected_overage(n, t, level))
}

/// Closed-form GTE, valid when every arm always reaches its order-up-to level.
pub fn true_gte_analytic(scenario: &Scenario) -> Result<GteReference> {
    let check = scenario.check_assumption3(&scenario.essential_infima())?;
    if !check.holds {
        let cell = check.failures().next().expect("failing cell");
        return Err(Error::AnalyticInvalid(format!(
            "level swing {} exceeds demand infimum {} at item {}, period {}",
            cell.lhs, cell.rhs, cell.item, cell.period
        )));
    }
    for (n, x) in scenario.initial_inventory().iter().enumerate() {
        let lowest = scenario.extreme_levels(n, 0).1;
        if *x > lowest {
            return Err(Error::AnalyticInvalid(format!(
                "initial inventory {x} of item {n} exceeds its lowest first-period level {lowest}"
            )));
        }
    }
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    let mut total = 0.0;
    for n in 0..n_items {
        for t in 0..horizon {
            total += expected_profit_plus(scenario, n, t, scenario.pure_level(n, t, true))
                - expected_profit_plus(scenario, n, t, scenario.pure_level(n, t, false));
        }
    }
    Ok(GteReference {
        value: total / (n_items * horizon) as f64,
        method: GteMethod::Analytic,
        ci_halfwidth: None,
        reps: None,
    })
}

/// One GT-minus-GC average-profit difference on a common demand draw.
pub(crate) fn gte_sample(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    let demand = scenario.demand().sample_trace(horizon, rng);
    let gt = simulate_horizon(scenario, &AssignmentMatrix::constant(n_items, horizon, true), &demand)?;
    let gc = simulate_horizon(scenario, &AssignmentMatrix::constant(n_items, horizon, false), &demand)?;
    Ok(gt.mean_profit() - gc.mean_profit())
}

/// Monte Carlo GTE where replication `i` draws demand from `stream(i)`.
/// Replications run in parallel; the result does not depend on the pool size.
pub fn true_gte_mc_streams(
    scenario: &Scenario,
    reps: usize,
    stream: impl Fn(usize) -> ChaCha8Rng + Sync,
) -> Result<GteReference> {
    if reps < 2 {
        return invalid("Monte Carlo GTE needs at least 2 replications");
    }
    let diffs = (0..reps)
        .into_par_iter()
        .map(|i| gte_sample(scenario, &mut stream(i)))
        .collect::<Result<Vec<f64>>>()?;
    let summary = SampleSummary::of(&diffs);
    Ok(GteReference {
        value: summary.mean,
        method: GteMethod::MonteCarlo,
        ci_halfwidth: Some(1.96 * summary.std_error().unwrap_or(0.0)),
        reps: Some(reps),
    })
}

/// Monte Carlo GTE with common random numbers for the two arms.
pub fn true_gte_mc<R: Rng + ?Sized>(scenario: &Scenario, reps: usize, rng: &mut R) -> Result<GteReference> {
    let seeds: Vec<u64> = (0..reps).map(|_| rng.random()).collect();
    true_gte_mc_streams(scenario, reps, |i| ChaCha8Rng::seed_from_u64(seeds[i]))
}
