//! Closed-form estimator biases per design, and an exact brute-force
//! expectation of the IPW estimator on small discrete instances.
//!
//! The closed forms hold when every item always reaches its order-up-to
//! level (the level-swing condition over all assignment vectors). They are
//! computed whatever the verdicts say; the verdicts travel with the report.
//!
//! Conditional expectations over the other items' assignments are taken by
//! enumerating all `2^(N-1)` configurations ([`OracleMode::Enumerate`]) or
//! by sampling whole assignment matrices ([`OracleMode::MonteCarlo`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{generate, inclusion_probability, AssignmentMatrix, DesignKind, DesignSpec};
use crate::error::{invalid, Error, Result};
use crate::estimate::{expected_profit_plus, ipw_weight};
use crate::inventory::{advance_item, AssumptionCheck, CellCheck, Scenario};
use crate::stats::SampleSummary;

/// Largest item count for which conditional expectations are enumerated.
pub const MAX_ENUMERATION_ITEMS: usize = 20;

/// Largest number of (assignment, item demand path) atoms the brute-force
/// expectation will visit.
pub const BRUTE_FORCE_ATOM_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum OracleMode {
    Enumerate,
    MonteCarlo { reps: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasTerm {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub assumption1: bool,
    pub assumption2: bool,
    pub assumption3: bool,
    pub condition10: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub design: DesignKind,
    /// Treatment probability used by the estimator.
    pub p: f64,
    pub bias: f64,
    pub terms: Vec<BiasTerm>,
    /// Monte Carlo standard error of `bias`; `None` for exact computations.
    pub std_error: Option<f64>,
    pub method: &'static str,
    pub verdicts: Verdicts,
}

impl BiasReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Pass/fail of each structural condition on a scenario.
pub fn verdicts(scenario: &Scenario) -> Result<Verdicts> {
    let essinf = scenario.essential_infima();
    Ok(Verdicts {
        assumption1: scenario.check_assumption1().holds,
        assumption2: scenario.check_assumption2_sw(&essinf)?.holds,
        assumption3: scenario.check_assumption3(&essinf)?.holds,
        condition10: check_condition10(scenario)?.holds,
    })
}

/// Largest level of every item stays below its newsvendor quantile
/// `F⁻¹((r - c)/r)`.
pub fn check_condition10(scenario: &Scenario) -> Result<AssumptionCheck> {
    let mut cells = Vec::with_capacity(scenario.n_items() * scenario.horizon());
    for t in 0..scenario.horizon() {
        for (n, item) in scenario.items().iter().enumerate() {
            let quantile = scenario.demand().quantile(n, t, item.critical_ratio())?;
            cells.push(CellCheck::new(n, t, scenario.extreme_levels(n, t).0, quantile));
        }
    }
    Ok(AssumptionCheck::from_cells("condition10", cells))
}

/// Largest affine shift `β` keeping scaled treatment levels above control
/// levels when `s^T = α s^C + β` and control fits the capacity.
pub fn lemma1_beta_bar(control: &[f64], capacity: f64, alpha: f64) -> Result<f64> {
    let total: f64 = control.iter().sum();
    if control.is_empty() || control.iter().any(|s| *s < 0.0) {
        return invalid("control levels must be nonempty and nonnegative");
    }
    if !(total < capacity) {
        return invalid(format!("control levels sum to {total}, need strictly below capacity {capacity}"));
    }
    if !(alpha >= 1.0) {
        return invalid(format!("alpha must be at least 1, got {alpha}"));
    }
    let n = control.len() as f64;
    let largest = control.iter().copied().fold(0.0, f64::max);
    if largest <= capacity / n {
        Ok(f64::INFINITY)
    } else {
        Ok(alpha * (capacity - total) / (n - capacity / largest))
    }
}

fn estimator_p(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        invalid(format!("the IPW estimator needs p in (0, 1), got {p}"))
    }
}

/// Expected `R⁺` and overage at the pure-arm levels, per cell.
struct PureArms {
    profit: [Vec<f64>; 2],
    overage: [Vec<f64>; 2],
}

impl PureArms {
    fn new(scenario: &Scenario) -> Self {
        let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
        let mut profit = [vec![0.0; n_items * horizon], vec![0.0; n_items * horizon]];
        let mut overage = profit.clone();
        for n in 0..n_items {
            for t in 0..horizon {
                for arm in 0..2 {
                    let level = scenario.pure_level(n, t, arm == 1);
                    profit[arm][n * horizon + t] = expected_profit_plus(scenario, n, t, level);
                    overage[arm][n * horizon + t] = scenario.demand().expected_overage(n, t, level);
                }
            }
        }
        Self { profit, overage }
    }
}

/// `E[R⁺(S_{n,t}(W_t), D) | W_{n,t} = arm]` and the matching overage, when
/// every other item is treated independently with probability `q(t)`.
struct ConditionalArms {
    profit: [Vec<f64>; 2],
    overage: [Vec<f64>; 2],
}

impl ConditionalArms {
    fn enumerate(scenario: &Scenario, q: impl Fn(usize) -> f64 + Sync) -> Result<Self> {
        let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
        if n_items > MAX_ENUMERATION_ITEMS {
            return Err(Error::Resource(format!(
                "enumerating 2^{} assignment vectors is beyond the {MAX_ENUMERATION_ITEMS}-item limit; use monte-carlo mode",
                n_items - 1
            )));
        }
        let totals: Vec<Vec<f64>> = (0..horizon).map(|t| predetermined_totals(scenario, t)).collect();
        // cells[n] holds (t, arm) → (profit, overage)
        let cells: Vec<Vec<[(f64, f64); 2]>> = (0..n_items)
            .into_par_iter()
            .map(|n| {
                (0..horizon)
                    .map(|t| [false, true].map(|own| conditional_cell(scenario, n, t, own, q(t), &totals[t])))
                    .collect()
            })
            .collect();
        let mut profit = [vec![0.0; n_items * horizon], vec![0.0; n_items * horizon]];
        let mut overage = profit.clone();
        for (n, row) in cells.iter().enumerate() {
            for (t, arms) in row.iter().enumerate() {
                for arm in 0..2 {
                    profit[arm][n * horizon + t] = arms[arm].0;
                    overage[arm][n * horizon + t] = arms[arm].1;
                }
            }
        }
        Ok(Self { profit, overage })
    }
}

/// Sum of predetermined levels for every assignment bitmask in period `t`.
fn predetermined_totals(scenario: &Scenario, t: usize) -> Vec<f64> {
    let n_items = scenario.n_items();
    let mut totals = vec![0.0; 1 << n_items];
    totals[0] = (0..n_items).map(|m| scenario.control(m, t)).sum();
    for mask in 1usize..totals.len() {
        let low = mask.trailing_zeros() as usize;
        totals[mask] = totals[mask & (mask - 1)] + scenario.treatment(low, t) - scenario.control(low, t);
    }
    totals
}

fn conditional_cell(scenario: &Scenario, n: usize, t: usize, own: bool, q: f64, totals: &[f64]) -> (f64, f64) {
    let others = scenario.n_items() - 1;
    let own_s = if own { scenario.treatment(n, t) } else { scenario.control(n, t) };
    let pow_q: Vec<f64> = (0..=others).map(|k| q.powi(k as i32)).collect();
    let pow_r: Vec<f64> = (0..=others).map(|k| (1.0 - q).powi(k as i32)).collect();
    let bit = 1usize << n;
    let (mut profit, mut overage) = (0.0, 0.0);
    for (mask, total) in totals.iter().enumerate() {
        if (mask & bit != 0) != own {
            continue;
        }
        let treated_others = (mask & !bit).count_ones() as usize;
        let prob = pow_q[treated_others] * pow_r[others - treated_others];
        if prob == 0.0 {
            continue;
        }
        let k = if *total <= scenario.capacity() { 1.0 } else { scenario.capacity() / total };
        let level = k * own_s;
        profit += prob * expected_profit_plus(scenario, n, t, level);
        overage += prob * scenario.demand().expected_overage(n, t, level);
    }
    (profit, overage)
}

fn report(
    scenario: &Scenario,
    design: DesignKind,
    p: f64,
    terms: Vec<BiasTerm>,
    std_error: Option<f64>,
    method: &'static str,
) -> Result<BiasReport> {
    Ok(BiasReport {
        design,
        p,
        bias: terms.iter().map(|t| t.value).sum(),
        terms,
        std_error,
        method,
        verdicts: verdicts(scenario)?,
    })
}

/// Switchback bias `-(1/NH) Σ_n Σ_{t<H} c_n [E(S(1) - D)^+ - E(S(0) - D)^+]`.
/// It does not depend on `p`.
pub fn bias_sw(scenario: &Scenario, p: f64) -> Result<BiasReport> {
    let p = estimator_p(p)?;
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    let pure = PureArms::new(scenario);
    let mut total = 0.0;
    for n in 0..n_items {
        let c = scenario.items()[n].order_cost;
        for t in 0..horizon.saturating_sub(1) {
            let i = n * horizon + t;
            total += c * (pure.overage[1][i] - pure.overage[0][i]);
        }
    }
    let term = BiasTerm {
        name: "carryover",
        value: -total / (n_items * horizon) as f64,
    };
    report(scenario, DesignKind::SW, p, vec![term], None, "closed-form")
}

/// Item-level randomization bias: the treated-level and control-level terms.
pub fn bias_ir(scenario: &Scenario, p: f64, mode: OracleMode) -> Result<BiasReport> {
    randomized_bias(scenario, DesignKind::IR, p, mode)
}

/// Pairwise randomization bias: the IR terms plus the switching term.
pub fn bias_pr(scenario: &Scenario, p: f64, mode: OracleMode) -> Result<BiasReport> {
    randomized_bias(scenario, DesignKind::PR, p, mode)
}

fn randomized_bias(scenario: &Scenario, kind: DesignKind, p: f64, mode: OracleMode) -> Result<BiasReport> {
    let p = estimator_p(p)?;
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    let cells = (n_items * horizon) as f64;
    let pure = PureArms::new(scenario);
    let switching = kind == DesignKind::PR;
    match mode {
        OracleMode::Enumerate => {
            let cond = ConditionalArms::enumerate(scenario, |_| p)?;
            let (mut treated, mut control, mut switch) = (0.0, 0.0, 0.0);
            for n in 0..n_items {
                let c = scenario.items()[n].order_cost;
                for t in 0..horizon {
                    let i = n * horizon + t;
                    treated += cond.profit[1][i] - pure.profit[1][i];
                    control += cond.profit[0][i] - pure.profit[0][i];
                    if t + 1 < horizon {
                        switch += c * (cond.overage[1][i] - cond.overage[0][i]);
                    }
                }
            }
            let mut terms = vec![
                BiasTerm { name: "treated_level", value: treated / cells },
                BiasTerm { name: "control_level", value: -control / cells },
            ];
            if switching {
                terms.push(BiasTerm { name: "switching", value: -switch / cells });
            }
            report(scenario, kind, p, terms, None, "enumerate")
        }
        OracleMode::MonteCarlo { reps, seed } => {
            let design = DesignSpec::new(kind, p);
            let samples = sample_integrands(scenario, &design, reps, seed, |w, levels| {
                let (mut treated, mut control, mut switch) = (0.0, 0.0, 0.0);
                for n in 0..n_items {
                    let c = scenario.items()[n].order_cost;
                    for t in 0..horizon {
                        let i = n * horizon + t;
                        let level = levels[i];
                        let on = w.get(n, t);
                        let profit = expected_profit_plus(scenario, n, t, level);
                        if on {
                            treated += profit / p - pure.profit[1][i];
                            control -= pure.profit[0][i];
                        } else {
                            treated -= pure.profit[1][i];
                            control += profit / (1.0 - p) - pure.profit[0][i];
                        }
                        if switching && t + 1 < horizon {
                            switch += c * ipw_weight(on, p) * scenario.demand().expected_overage(n, t, level);
                        }
                    }
                }
                let mut terms = vec![treated / cells, -control / cells];
                if switching {
                    terms.push(-switch / cells);
                }
                terms
            })?;
            let names: &[&'static str] = &["treated_level", "control_level", "switching"];
            monte_carlo_report(scenario, kind, p, names, samples)
        }
    }
}

/// Staggered-rollout bias: carryover at the switch period, treated-level and
/// control-level terms, and a term that vanishes when demand and levels are
/// stationary.
pub fn bias_sr(scenario: &Scenario, design: &DesignSpec, mode: OracleMode) -> Result<BiasReport> {
    let horizon = scenario.horizon();
    if design.kind != DesignKind::SR {
        return Err(Error::InvalidDesign("bias_sr needs a staggered-rollout design".into()));
    }
    design.validate(horizon)?;
    let weights = design.sr_weights.as_deref().expect("validated");
    let p = estimator_p(inclusion_probability(design))?;
    let n_items = scenario.n_items();
    let nh = (n_items * horizon) as f64;
    let pure = PureArms::new(scenario);
    let mixed: Vec<f64> = (0..n_items * horizon)
        .map(|i| (1.0 - p) * pure.profit[1][i] + p * pure.profit[0][i])
        .collect();

    // Bias contribution of item n given its last control period h (1-based),
    // from per-cell conditional profit / overage lookups.
    let item_terms = |n: usize, h: usize, profit: &dyn Fn(usize) -> f64, overage_at_switch: f64| -> [f64; 4] {
        let c = scenario.items()[n].order_cost;
        let carry = if h != horizon { c / (nh * p * (1.0 - p)) * overage_at_switch } else { 0.0 };
        let (mut treated, mut control, mut drift) = (0.0, 0.0, 0.0);
        for t in 0..horizon {
            let i = n * horizon + t;
            if t + 1 > h {
                treated += profit(t) - pure.profit[1][i];
                drift += mixed[i] / (nh * p);
            } else {
                control += profit(t) - pure.profit[0][i];
                drift -= mixed[i] / (nh * (1.0 - p));
            }
        }
        [carry, treated / (nh * p), -control / (nh * (1.0 - p)), drift]
    };

    let names: &[&'static str] = &["carryover", "treated_level", "control_level", "nonstationarity"];
    match mode {
        OracleMode::Enumerate => {
            // Other items are treated in period t (0-based) when their H_m ≤ t.
            let treated_share: Vec<f64> = (0..horizon).map(|t| weights[..t].iter().sum()).collect();
            let cond = ConditionalArms::enumerate(scenario, |t| treated_share[t])?;
            let mut sums = [0.0; 4];
            for n in 0..n_items {
                for (idx, w) in weights.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let h = idx + 1;
                    let profit = |t: usize| cond.profit[usize::from(t + 1 > h)][n * horizon + t];
                    let switch_overage = cond.overage[0][n * horizon + h - 1];
                    for (acc, v) in sums.iter_mut().zip(item_terms(n, h, &profit, switch_overage)) {
                        *acc += w * v;
                    }
                }
            }
            let terms = names.iter().zip(sums).map(|(name, value)| BiasTerm { name, value }).collect();
            report(scenario, DesignKind::SR, p, terms, None, "enumerate")
        }
        OracleMode::MonteCarlo { reps, seed } => {
            let samples = sample_integrands(scenario, design, reps, seed, |w, levels| {
                let mut sums = vec![0.0; 4];
                for n in 0..n_items {
                    let h = w.row(n).iter().filter(|x| !**x).count();
                    let profit = |t: usize| expected_profit_plus(scenario, n, t, levels[n * horizon + t]);
                    let switch_overage = if h >= 1 {
                        scenario.demand().expected_overage(n, h - 1, levels[n * horizon + h - 1])
                    } else {
                        0.0
                    };
                    for (acc, v) in sums.iter_mut().zip(item_terms(n, h, &profit, switch_overage)) {
                        *acc += v;
                    }
                }
                sums
            })?;
            monte_carlo_report(scenario, DesignKind::SR, p, names, samples)
        }
    }
}

/// Per-replication term values from sampled assignment matrices.
fn sample_integrands(
    scenario: &Scenario,
    design: &DesignSpec,
    reps: usize,
    seed: u64,
    integrand: impl Fn(&AssignmentMatrix, &[f64]) -> Vec<f64> + Sync,
) -> Result<Vec<Vec<f64>>> {
    if reps < 2 {
        return invalid("Monte Carlo mode needs at least 2 replications");
    }
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let w = generate(design, n_items, horizon, &mut rng)?;
            let mut levels = vec![0.0; n_items * horizon];
            let mut column = vec![0.0; n_items];
            for t in 0..horizon {
                scenario.fill_levels(|n| w.get(n, t), t, &mut column);
                for (n, s) in column.iter().enumerate() {
                    levels[n * horizon + t] = *s;
                }
            }
            Ok(integrand(&w, &levels))
        })
        .collect()
}

fn monte_carlo_report(
    scenario: &Scenario,
    kind: DesignKind,
    p: f64,
    names: &[&'static str],
    samples: Vec<Vec<f64>>,
) -> Result<BiasReport> {
    let width = samples[0].len();
    let terms = (0..width)
        .map(|j| BiasTerm {
            name: names[j],
            value: SampleSummary::of(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()).mean,
        })
        .collect();
    let totals: Vec<f64> = samples.iter().map(|s| s.iter().sum()).collect();
    let mut out = report(scenario, kind, p, terms, None, "monte-carlo")?;
    out.std_error = SampleSummary::of(&totals).std_error();
    Ok(out)
}

/// Dispatch to the bias formula for `design`.
pub fn design_bias(scenario: &Scenario, design: &DesignSpec, mode: OracleMode) -> Result<BiasReport> {
    match design.kind {
        DesignKind::SW => bias_sw(scenario, design.p),
        DesignKind::IR => bias_ir(scenario, design.p, mode),
        DesignKind::PR => bias_pr(scenario, design.p, mode),
        DesignKind::SR => bias_sr(scenario, design, mode),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactExpectation {
    pub expected_estimate: f64,
    pub gte: f64,
    pub bias: f64,
    pub atoms: u64,
}

/// Every assignment matrix the design can produce, as an index space.
struct AssignmentSupport<'a> {
    design: &'a DesignSpec,
    n_items: usize,
    horizon: usize,
    /// SR only: periods with positive weight.
    rollout_periods: Vec<usize>,
}

impl<'a> AssignmentSupport<'a> {
    fn new(design: &'a DesignSpec, n_items: usize, horizon: usize) -> Self {
        let rollout_periods = design
            .sr_weights
            .as_deref()
            .map(|w| (0..w.len()).filter(|&i| w[i] > 0.0).map(|i| i + 1).collect())
            .unwrap_or_default();
        Self {
            design,
            n_items,
            horizon,
            rollout_periods,
        }
    }

    fn size(&self) -> Option<u64> {
        let pow2 = |k: usize| 1u64.checked_shl(k as u32).filter(|_| k < 64);
        match self.design.kind {
            DesignKind::SW => pow2(self.horizon),
            DesignKind::IR => pow2(self.n_items),
            DesignKind::PR => pow2(self.n_items * self.horizon),
            DesignKind::SR => (self.rollout_periods.len() as u64).checked_pow(self.n_items as u32),
        }
    }

    /// Matrix number `index` and its probability.
    fn atom(&self, index: u64) -> (AssignmentMatrix, f64) {
        let p = self.design.p;
        let bern = |bit: bool| if bit { p } else { 1.0 - p };
        let (n_items, horizon) = (self.n_items, self.horizon);
        let bit = |k: usize| (index >> k) & 1 == 1;
        match self.design.kind {
            DesignKind::SW => {
                let prob = (0..horizon).map(|t| bern(bit(t))).product();
                (AssignmentMatrix::from_fn(n_items, horizon, None, |_, t| bit(t)), prob)
            }
            DesignKind::IR => {
                let prob = (0..n_items).map(|n| bern(bit(n))).product();
                (AssignmentMatrix::from_fn(n_items, horizon, None, |n, _| bit(n)), prob)
            }
            DesignKind::PR => {
                let prob = (0..n_items * horizon).map(|k| bern(bit(k))).product();
                (AssignmentMatrix::from_fn(n_items, horizon, None, |n, t| bit(n * horizon + t)), prob)
            }
            DesignKind::SR => {
                let weights = self.design.sr_weights.as_deref().expect("validated");
                let radix = self.rollout_periods.len() as u64;
                let mut rest = index;
                let last_control: Vec<usize> = (0..n_items)
                    .map(|_| {
                        let h = self.rollout_periods[(rest % radix) as usize];
                        rest /= radix;
                        h
                    })
                    .collect();
                let prob = last_control.iter().map(|h| weights[h - 1]).product();
                (AssignmentMatrix::from_fn(n_items, horizon, None, |n, t| t + 1 > last_control[n]), prob)
            }
        }
    }
}

/// Σ over item `n`'s demand paths of `P(path) Σ_t weight(t)·R_{n,t}`, with
/// salvage credited to the final period.
fn item_path_expectation(
    scenario: &Scenario,
    n: usize,
    levels: &[f64],
    outcomes: &[Vec<(f64, f64)>],
    weight: impl Fn(usize) -> f64,
) -> f64 {
    let horizon = scenario.horizon();
    let item = &scenario.items()[n];
    let mut digits = vec![0usize; horizon];
    let mut total = 0.0;
    loop {
        let mut prob = 1.0;
        let mut on_hand = scenario.initial_inventory()[n];
        let mut value = 0.0;
        for t in 0..horizon {
            let (d, pd) = outcomes[t][digits[t]];
            prob *= pd;
            let step = advance_item(item, on_hand, levels[t], d);
            let mut profit = step.profit;
            if t + 1 == horizon {
                profit += item.order_cost * step.next_on_hand;
            }
            value += weight(t) * profit;
            on_hand = step.next_on_hand;
        }
        total += prob * value;
        // next mixed-radix demand path
        let mut t = 0;
        loop {
            if t == horizon {
                return total;
            }
            digits[t] += 1;
            if digits[t] < outcomes[t].len() {
                break;
            }
            digits[t] = 0;
            t += 1;
        }
    }
}

/// Exact `E[IPW estimate]` and GTE on a discrete-demand instance, by
/// simulating every assignment matrix in the design's support against every
/// demand path of every item. Items only interact through their levels, so
/// each item's demand paths are enumerated separately.
pub fn brute_force_expected_estimate(scenario: &Scenario, design: &DesignSpec) -> Result<ExactExpectation> {
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    design.validate(horizon)?;
    let p = estimator_p(inclusion_probability(design))?;
    if !scenario.demand().is_discrete() {
        return invalid("brute-force expectation needs discrete demand for every item");
    }
    let outcomes: Vec<Vec<Vec<(f64, f64)>>> = (0..n_items)
        .map(|n| (0..horizon).map(|t| scenario.demand().outcomes(n, t).expect("discrete")).collect())
        .collect();
    let paths: u64 = outcomes
        .iter()
        .map(|item| item.iter().map(|o| o.len() as u64).product::<u64>())
        .sum();
    let support = AssignmentSupport::new(design, n_items, horizon);
    let atoms = support
        .size()
        .and_then(|s| s.checked_mul(paths))
        .filter(|a| *a <= BRUTE_FORCE_ATOM_BUDGET)
        .ok_or_else(|| {
            Error::Resource(format!(
                "brute force would visit more than {BRUTE_FORCE_ATOM_BUDGET} atoms"
            ))
        })?;
    let support_size = support.size().expect("checked");
    let cells = (n_items * horizon) as f64;

    let levels_of = |w: &AssignmentMatrix| {
        let mut levels = vec![vec![0.0; horizon]; n_items];
        let mut column = vec![0.0; n_items];
        for t in 0..horizon {
            scenario.fill_levels(|n| w.get(n, t), t, &mut column);
            for n in 0..n_items {
                levels[n][t] = column[n];
            }
        }
        levels
    };

    let contributions: Vec<f64> = (0..support_size)
        .into_par_iter()
        .map(|index| {
            let (w, prob) = support.atom(index);
            if prob == 0.0 {
                return 0.0;
            }
            let levels = levels_of(&w);
            let estimate: f64 = (0..n_items)
                .map(|n| item_path_expectation(scenario, n, &levels[n], &outcomes[n], |t| ipw_weight(w.get(n, t), p)))
                .sum();
            prob * estimate / cells
        })
        .collect();
    let expected_estimate: f64 = contributions.iter().sum();

    let arm_mean = |treated: bool| {
        let levels = levels_of(&AssignmentMatrix::constant(n_items, horizon, treated));
        (0..n_items)
            .map(|n| item_path_expectation(scenario, n, &levels[n], &outcomes[n], |_| 1.0))
            .sum::<f64>()
            / cells
    };
    let gte = arm_mean(true) - arm_mean(false);
    Ok(ExactExpectation {
        expected_estimate,
        gte,
        bias: expected_estimate - gte,
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandModel, Noise};
    use crate::design::{sr_distribution, RolloutShape};
    use crate::inventory::ItemParams;

    fn point(d: f64) -> Noise {
        Noise::Discrete {
            support: vec![d],
            probabilities: vec![1.0],
        }
    }

    fn stationary(control: &[f64], treatment: &[f64], capacity: f64, horizon: usize, noise: Noise, r: f64, c: f64) -> Scenario {
        let n = control.len();
        Scenario::new(
            vec![ItemParams::new(r, c).unwrap(); n],
            capacity,
            DemandModel::stationary(n, noise).unwrap(),
            control.iter().map(|s| vec![*s; horizon]).collect(),
            treatment.iter().map(|s| vec![*s; horizon]).collect(),
        )
        .unwrap()
    }

    fn toy() -> Scenario {
        stationary(&[1.0], &[2.0], f64::INFINITY, 2, point(1.0), 3.0, 1.0)
    }

    #[test]
    fn switchback_toy() {
        let report = bias_sw(&toy(), 0.5).unwrap();
        assert!((report.bias + 0.5).abs() < 1e-12);
        assert!(report.verdicts.assumption1 && report.verdicts.assumption2);
        let exact = brute_force_expected_estimate(&toy(), &DesignSpec::new(DesignKind::SW, 0.5)).unwrap();
        assert!((exact.expected_estimate + 0.5).abs() < 1e-12);
        assert_eq!(exact.gte, 0.0);
    }

    #[test]
    fn switchback_degenerate_cases() {
        let same = stationary(&[1.5], &[1.5], 10.0, 3, point(1.0), 3.0, 1.0);
        assert_eq!(bias_sw(&same, 0.5).unwrap().bias, 0.0);
        let single = stationary(&[1.0], &[2.0], 10.0, 1, point(1.0), 3.0, 1.0);
        assert_eq!(bias_sw(&single, 0.5).unwrap().bias, 0.0);
    }

    #[test]
    fn item_randomized_toy_is_unbiased() {
        let report = bias_ir(&toy(), 0.5, OracleMode::Enumerate).unwrap();
        assert!(report.bias.abs() < 1e-12);
        let exact = brute_force_expected_estimate(&toy(), &DesignSpec::new(DesignKind::IR, 0.5)).unwrap();
        assert!(exact.expected_estimate.abs() < 1e-12);
    }

    #[test]
    fn item_randomized_two_items() {
        let s = stationary(&[2.0, 2.0], &[4.0, 4.0], 6.0, 1, point(2.0), 3.0, 1.0);
        // treated item sees level 4 or 3 with equal odds; control sees 2 either way;
        // demand 2 caps sales so both conditional profits equal the pure-arm ones.
        let report = bias_ir(&s, 0.5, OracleMode::Enumerate).unwrap();
        assert!(report.bias.abs() < 1e-12);
        let tight = stationary(&[2.0, 2.0], &[4.0, 4.0], 6.0, 1, point(5.0), 3.0, 1.0);
        let report = bias_ir(&tight, 0.5, OracleMode::Enumerate).unwrap();
        // treated: E R⁺ = 2·(0.5·4 + 0.5·3) = 7 vs pure 6 for both items; control: 4 vs pure 4
        assert!((report.term("treated_level").unwrap() - 1.0).abs() < 1e-12);
        assert!(report.term("control_level").unwrap().abs() < 1e-12);
        let exact = brute_force_expected_estimate(&tight, &DesignSpec::new(DesignKind::IR, 0.5)).unwrap();
        assert!((exact.bias - report.bias).abs() < 1e-12);
    }

    #[test]
    fn pairwise_single_item_matches_switchback() {
        let pr = bias_pr(&toy(), 0.5, OracleMode::Enumerate).unwrap();
        assert!((pr.bias + 0.5).abs() < 1e-12);
        assert!(pr.term("treated_level").unwrap().abs() < 1e-12);
        assert!(pr.term("control_level").unwrap().abs() < 1e-12);
        let same = stationary(&[1.5, 1.0], &[1.5, 1.0], 2.0, 2, point(1.0), 3.0, 1.0);
        assert!(bias_pr(&same, 0.5, OracleMode::Enumerate).unwrap().bias.abs() < 1e-12);
    }

    #[test]
    fn staggered_toy() {
        let s = stationary(&[2.0], &[3.0], f64::INFINITY, 2, point(1.0), 3.0, 1.0);
        let design = DesignSpec::staggered(0.5, sr_distribution(0.5, 2, RolloutShape::PointMass { period: 1 }).unwrap());
        let report = bias_sr(&s, &design, OracleMode::Enumerate).unwrap();
        assert!((report.bias - 2.0).abs() < 1e-12);
        assert!((report.term("carryover").unwrap() - 2.0).abs() < 1e-12);
        let exact = brute_force_expected_estimate(&s, &design).unwrap();
        assert!((exact.expected_estimate - 2.0).abs() < 1e-12);
        assert_eq!(exact.gte, 0.0);
    }

    #[test]
    fn enumeration_limit() {
        let n = MAX_ENUMERATION_ITEMS + 1;
        let s = stationary(&vec![1.0; n], &vec![1.0; n], 5.0, 1, point(1.0), 3.0, 1.0);
        assert!(matches!(bias_ir(&s, 0.5, OracleMode::Enumerate), Err(Error::Resource(_))));
        assert!(bias_ir(&s, 0.5, OracleMode::MonteCarlo { reps: 10, seed: 1 }).is_ok());
    }

    #[test]
    fn brute_force_budget() {
        let noise = Noise::Discrete {
            support: vec![1.0, 2.0, 3.0],
            probabilities: vec![0.2, 0.3, 0.5],
        };
        let s = stationary(&[1.0; 5], &[2.0; 5], 6.0, 5, noise, 3.0, 1.0);
        assert!(matches!(
            brute_force_expected_estimate(&s, &DesignSpec::new(DesignKind::PR, 0.5)),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn beta_bar_cases() {
        assert!((lemma1_beta_bar(&[3.0, 1.0], 5.0, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(lemma1_beta_bar(&[1.0, 1.0], 5.0, 1.0).unwrap(), f64::INFINITY);
        assert!((lemma1_beta_bar(&[3.0, 1.0], 5.0, 2.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(lemma1_beta_bar(&[3.0, 2.0], 5.0, 1.0).is_err());
        assert!(lemma1_beta_bar(&[3.0, 1.0], 5.0, 0.5).is_err());
    }

    #[test]
    fn condition10_cases() {
        let zero = stationary(&[0.0], &[0.0], 1.0, 2, Noise::Uniform { low: 2.0, width: 4.0 }, 2.0, 1.0);
        assert!(check_condition10(&zero).unwrap().holds);
        let below = stationary(&[1.0], &[3.9], 100.0, 2, Noise::Uniform { low: 2.0, width: 4.0 }, 2.0, 1.0);
        assert!(check_condition10(&below).unwrap().holds);
        let above = stationary(&[1.0], &[4.1], 100.0, 2, Noise::Uniform { low: 2.0, width: 4.0 }, 2.0, 1.0);
        assert!(!check_condition10(&above).unwrap().holds);
    }
}
