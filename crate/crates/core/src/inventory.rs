//! Lost-sales, zero-lead-time, multi-item inventory dynamics under a shared
//! capacity, with proportional scaling of base-stock levels.
//!
//! Each period: observe on-hand `X`, order `O = (S - X)^+`, stock up to
//! `S̃ = X + O`, sell `min(S̃, D)`, earn `R = r·min(S̃, D) - c·O`, carry
//! `(S̃ - D)^+` forward. Leftover stock after the final period is salvaged
//! at the ordering cost and credited to the final period's profit.

use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::design::AssignmentMatrix;
use crate::error::{invalid, Error, Result};

/// Relative tolerance for capacity and ordering comparisons.
pub const REL_TOL: f64 = 1e-9;

pub(crate) fn approx_le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_TOL * lhs.abs().max(rhs.abs()).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemParams {
    pub sell_price: f64,
    pub order_cost: f64,
}

impl ItemParams {
    pub fn new(sell_price: f64, order_cost: f64) -> Result<Self> {
        let item = Self {
            sell_price,
            order_cost,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sell_price.is_finite() && self.order_cost > 0.0 && self.sell_price > self.order_cost) {
            return invalid(format!(
                "need sell_price > order_cost > 0, got r = {}, c = {}",
                self.sell_price, self.order_cost
            ));
        }
        Ok(())
    }

    pub fn margin(&self) -> f64 {
        self.sell_price - self.order_cost
    }

    /// Newsvendor critical ratio `(r - c)/r`.
    pub fn critical_ratio(&self) -> f64 {
        self.margin() / self.sell_price
    }

    /// `R⁺(s, d) = (r - c)(s - (s - d)^+)`: profit of reaching level `s`
    /// when the reached stock is fully paid for and leftovers are carried.
    pub fn profit_plus(&self, level: f64, demand: f64) -> f64 {
        self.margin() * (level - (level - demand).max(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ItemStep {
    pub order: f64,
    pub post_order: f64,
    pub profit: f64,
    pub next_on_hand: f64,
}

#[inline]
pub(crate) fn advance_item(item: &ItemParams, on_hand: f64, level: f64, demand: f64) -> ItemStep {
    let order = (level - on_hand).max(0.0);
    let post_order = on_hand + order;
    let sold = post_order.min(demand);
    ItemStep {
        order,
        post_order,
        profit: item.sell_price * sold - item.order_cost * order,
        next_on_hand: (post_order - demand).max(0.0),
    }
}

/// Multiply levels by `k = min(1, B/Σs)` so their sum fits the capacity.
pub fn scale_base_stock(predetermined: &[f64], capacity: f64) -> Result<(Vec<f64>, f64)> {
    if predetermined.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return invalid("base-stock levels must be finite and nonnegative");
    }
    if capacity.is_nan() || capacity <= 0.0 {
        return invalid(format!("capacity must be positive, got {capacity}"));
    }
    let k = scale_factor(predetermined.iter().sum(), capacity);
    Ok((predetermined.iter().map(|s| k * s).collect(), k))
}

#[inline]
fn scale_factor(total: f64, capacity: f64) -> f64 {
    if total <= capacity {
        1.0
    } else {
        capacity / total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    items: Vec<ItemParams>,
    /// `null` means unconstrained.
    capacity: Option<f64>,
    demand: DemandModel,
    control_schedule: Vec<Vec<f64>>,
    treatment_schedule: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_inventory: Option<Vec<f64>>,
}

/// A complete problem instance. Schedules are indexed `[item][period]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc", into = "ScenarioDoc")]
pub struct Scenario {
    items: Vec<ItemParams>,
    capacity: f64,
    demand: DemandModel,
    control: Vec<Vec<f64>>,
    treatment: Vec<Vec<f64>>,
    initial_inventory: Vec<f64>,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = Error;

    fn try_from(doc: ScenarioDoc) -> Result<Self> {
        let mut scenario = Scenario::new(
            doc.items,
            doc.capacity.unwrap_or(f64::INFINITY),
            doc.demand,
            doc.control_schedule,
            doc.treatment_schedule,
        )?;
        if let Some(x) = doc.initial_inventory {
            scenario = scenario.with_initial_inventory(x)?;
        }
        Ok(scenario)
    }
}

impl From<Scenario> for ScenarioDoc {
    fn from(s: Scenario) -> Self {
        let initial_inventory = s.initial_inventory.iter().any(|x| *x != 0.0).then_some(s.initial_inventory);
        ScenarioDoc {
            items: s.items,
            capacity: s.capacity.is_finite().then_some(s.capacity),
            demand: s.demand,
            control_schedule: s.control,
            treatment_schedule: s.treatment,
            initial_inventory,
        }
    }
}

impl Scenario {
    pub fn new(
        items: Vec<ItemParams>,
        capacity: f64,
        demand: DemandModel,
        control: Vec<Vec<f64>>,
        treatment: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = items.len();
        if n == 0 {
            return invalid("scenario needs at least one item");
        }
        if capacity.is_nan() || capacity <= 0.0 {
            return invalid(format!("capacity must be positive, got {capacity}"));
        }
        for item in &items {
            item.validate()?;
        }
        demand.validate()?;
        if demand.n_items() != n {
            return invalid(format!("demand model has {} items, scenario has {n}", demand.n_items()));
        }
        if control.len() != n || treatment.len() != n {
            return invalid("schedules must have one row per item");
        }
        let horizon = control[0].len();
        if horizon == 0 {
            return invalid("horizon must be at least one period");
        }
        for (row, name) in control.iter().zip(std::iter::repeat("control")).chain(treatment.iter().zip(std::iter::repeat("treatment"))) {
            if row.len() != horizon {
                return invalid(format!("{name} schedule rows must all have {horizon} periods"));
            }
            if row.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return invalid(format!("{name} schedule entries must be finite and nonnegative"));
            }
        }
        for (n, (c_row, t_row)) in control.iter().zip(&treatment).enumerate() {
            if let Some(t) = (0..horizon).find(|&t| c_row[t] > t_row[t]) {
                return invalid(format!(
                    "control level exceeds treatment level at item {n}, period {t} ({} > {})",
                    c_row[t], t_row[t]
                ));
            }
        }
        Ok(Self {
            items,
            capacity,
            demand,
            control,
            treatment,
            initial_inventory: vec![0.0; n],
        })
    }

    pub fn with_initial_inventory(mut self, on_hand: Vec<f64>) -> Result<Self> {
        if on_hand.len() != self.n_items() || on_hand.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("initial inventory must be one nonnegative value per item");
        }
        self.initial_inventory = on_hand;
        Ok(self)
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn horizon(&self) -> usize {
        self.control[0].len()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn items(&self) -> &[ItemParams] {
        &self.items
    }

    pub fn demand(&self) -> &DemandModel {
        &self.demand
    }

    pub fn control(&self, n: usize, t: usize) -> f64 {
        self.control[n][t]
    }

    pub fn treatment(&self, n: usize, t: usize) -> f64 {
        self.treatment[n][t]
    }

    pub fn control_schedule(&self) -> &[Vec<f64>] {
        &self.control
    }

    pub fn treatment_schedule(&self) -> &[Vec<f64>] {
        &self.treatment
    }

    pub fn initial_inventory(&self) -> &[f64] {
        &self.initial_inventory
    }

    /// A copy with the treatment schedule replaced by the control schedule.
    pub fn null_effect(&self) -> Self {
        Self {
            treatment: self.control.clone(),
            ..self.clone()
        }
    }

    fn predetermined(&self, n: usize, t: usize, treated: bool) -> f64 {
        if treated {
            self.treatment[n][t]
        } else {
            self.control[n][t]
        }
    }

    /// `S_{n,t}(w)` for every item, given the period-`t` assignment column.
    pub fn effective_levels(&self, column: &[bool], t: usize) -> Result<Vec<f64>> {
        if column.len() != self.n_items() {
            return invalid(format!(
                "assignment column has {} entries, scenario has {} items",
                column.len(),
                self.n_items()
            ));
        }
        if t >= self.horizon() {
            return invalid(format!("period {t} outside horizon {}", self.horizon()));
        }
        let mut out = vec![0.0; column.len()];
        self.fill_levels(|n| column[n], t, &mut out);
        Ok(out)
    }

    pub(crate) fn fill_levels(&self, treated: impl Fn(usize) -> bool, t: usize, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = self.predetermined(n, t, treated(n));
            total += *slot;
        }
        let k = scale_factor(total, self.capacity);
        if k < 1.0 {
            out.iter_mut().for_each(|s| *s *= k);
        }
        k
    }

    /// Level of item `n` in period `t` under a pure arm (all treated or all control).
    pub fn pure_level(&self, n: usize, t: usize, treated: bool) -> f64 {
        let total: f64 = (0..self.n_items()).map(|m| self.predetermined(m, t, treated)).sum();
        scale_factor(total, self.capacity) * self.predetermined(n, t, treated)
    }

    /// Level of item `n` when it is in arm `own` and the others' predetermined
    /// levels sum to `others_total`.
    pub(crate) fn level_given_total(&self, n: usize, t: usize, own: bool, others_total: f64) -> f64 {
        let s = self.predetermined(n, t, own);
        scale_factor(others_total + s, self.capacity) * s
    }

    /// `(max_w S_{n,t}(w), min_w S_{n,t}(w))` over all `2^N` assignment
    /// vectors. The maximum puts item `n` alone in treatment, the minimum
    /// puts it alone in control.
    pub fn extreme_levels(&self, n: usize, t: usize) -> (f64, f64) {
        let control_total: f64 = (0..self.n_items()).map(|m| self.control[m][t]).sum();
        let treatment_total: f64 = (0..self.n_items()).map(|m| self.treatment[m][t]).sum();
        let max = self.level_given_total(n, t, true, control_total - self.control[n][t]);
        let min = self.level_given_total(n, t, false, treatment_total - self.treatment[n][t]);
        (max, min)
    }

    /// Essential infima of demand, indexed `[item][period]`.
    pub fn essential_infima(&self) -> Vec<Vec<f64>> {
        (0..self.n_items())
            .map(|n| (0..self.horizon()).map(|t| self.demand.essential_infimum(n, t)).collect())
            .collect()
    }

    /// `S_{n,t}(0) ≤ S_{n,t}(1)` for all items and periods.
    pub fn check_assumption1(&self) -> AssumptionCheck {
        let mut cells = Vec::with_capacity(self.n_items() * self.horizon());
        for t in 0..self.horizon() {
            for n in 0..self.n_items() {
                cells.push(CellCheck::new(n, t, self.pure_level(n, t, false), self.pure_level(n, t, true)));
            }
        }
        AssumptionCheck::from_cells("assumption1", cells)
    }

    /// Level swings between consecutive periods, restricted to all-same
    /// assignment vectors, stay within the demand infimum.
    pub fn check_assumption2_sw(&self, essinf: &[Vec<f64>]) -> Result<AssumptionCheck> {
        self.check_swing("assumption2", essinf, |n, t| {
            let a = self.pure_level(n, t, true);
            let b = self.pure_level(n, t, false);
            (a.max(b), a.min(b))
        })
    }

    /// Like assumption 2 but over all `2^N` assignment vectors.
    pub fn check_assumption3(&self, essinf: &[Vec<f64>]) -> Result<AssumptionCheck> {
        self.check_swing("assumption3", essinf, |n, t| self.extreme_levels(n, t))
    }

    fn check_swing(
        &self,
        name: &str,
        essinf: &[Vec<f64>],
        extremes: impl Fn(usize, usize) -> (f64, f64),
    ) -> Result<AssumptionCheck> {
        if essinf.len() != self.n_items() || essinf.iter().any(|row| row.len() < self.horizon().saturating_sub(1)) {
            return invalid("essential infimum matrix must be N×H");
        }
        let mut cells = Vec::new();
        for t in 0..self.horizon().saturating_sub(1) {
            for n in 0..self.n_items() {
                let swing = extremes(n, t).0 - extremes(n, t + 1).1;
                cells.push(CellCheck::new(n, t, swing, essinf[n][t]));
            }
        }
        Ok(AssumptionCheck::from_cells(name, cells))
    }
}

/// One `lhs ≤ rhs` comparison for an item-period cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellCheck {
    pub item: usize,
    pub period: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl CellCheck {
    pub(crate) fn new(item: usize, period: usize, lhs: f64, rhs: f64) -> Self {
        Self {
            item,
            period,
            lhs,
            rhs,
            holds: approx_le(lhs, rhs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub holds: bool,
    pub cells: Vec<CellCheck>,
}

impl AssumptionCheck {
    pub(crate) fn from_cells(name: &str, cells: Vec<CellCheck>) -> Self {
        Self {
            name: name.to_string(),
            holds: cells.iter().all(|c| c.holds),
            cells,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| !c.holds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemState {
    /// 0-based index of the period about to start; equals H once finished.
    pub period: usize,
    pub on_hand: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub levels: Vec<f64>,
    pub post_order: Vec<f64>,
    pub orders: Vec<f64>,
    pub demand: Vec<f64>,
    pub profit: Vec<f64>,
    pub scale_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimTrace {
    pub records: Vec<PeriodRecord>,
    /// `c_n·X_{n,H+1}`, already included in the final period's profit.
    pub salvage: Vec<f64>,
}

impl SimTrace {
    pub fn n_items(&self) -> usize {
        self.salvage.len()
    }

    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn profit(&self, n: usize, t: usize) -> f64 {
        self.records[t].profit[n]
    }

    pub fn total_profit(&self) -> f64 {
        self.records.iter().flat_map(|r| r.profit.iter()).sum()
    }

    pub fn mean_profit(&self) -> f64 {
        self.total_profit() / (self.n_items() * self.horizon()) as f64
    }
}

/// Advance every item by one period. Salvage is not applied here.
pub fn step_period(
    state: &SystemState,
    levels: &[f64],
    demand: &[f64],
    items: &[ItemParams],
) -> Result<(SystemState, PeriodRecord)> {
    let n = items.len();
    if state.on_hand.len() != n || levels.len() != n || demand.len() != n {
        return invalid("state, levels, demand and items must have equal length");
    }
    if state.on_hand.iter().chain(levels).chain(demand).any(|x| !(*x >= 0.0)) {
        return invalid("on-hand, levels and demand must be nonnegative");
    }
    let mut record = PeriodRecord {
        levels: levels.to_vec(),
        post_order: Vec::with_capacity(n),
        orders: Vec::with_capacity(n),
        demand: demand.to_vec(),
        profit: Vec::with_capacity(n),
        scale_factor: 1.0,
    };
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let step = advance_item(&items[i], state.on_hand[i], levels[i], demand[i]);
        record.orders.push(step.order);
        record.post_order.push(step.post_order);
        record.profit.push(step.profit);
        next.push(step.next_on_hand);
    }
    Ok((
        SystemState {
            period: state.period + 1,
            on_hand: next,
        },
        record,
    ))
}

/// Run the whole horizon under an assignment matrix and an N×H demand trace
/// (indexed `[item][period]`).
pub fn simulate_horizon(
    scenario: &Scenario,
    assignment: &AssignmentMatrix,
    demand_trace: &[Vec<f64>],
) -> Result<SimTrace> {
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    if assignment.n_items() != n_items || assignment.horizon() != horizon {
        return invalid(format!(
            "assignment is {}×{}, scenario is {n_items}×{horizon}",
            assignment.n_items(),
            assignment.horizon()
        ));
    }
    if demand_trace.len() != n_items || demand_trace.iter().any(|row| row.len() != horizon) {
        return invalid("demand trace must be N×H");
    }
    let mut state = SystemState {
        period: 0,
        on_hand: scenario.initial_inventory.clone(),
    };
    let mut records = Vec::with_capacity(horizon);
    let mut levels = vec![0.0; n_items];
    let mut demand = vec![0.0; n_items];
    for t in 0..horizon {
        let k = scenario.fill_levels(|n| assignment.get(n, t), t, &mut levels);
        for (n, d) in demand.iter_mut().enumerate() {
            *d = demand_trace[n][t];
        }
        let (next, mut record) = step_period(&state, &levels, &demand, &scenario.items)?;
        record.scale_factor = k;
        records.push(record);
        state = next;
    }
    let salvage: Vec<f64> = scenario
        .items
        .iter()
        .zip(&state.on_hand)
        .map(|(item, x)| item.order_cost * x)
        .collect();
    if let Some(last) = records.last_mut() {
        for (r, s) in last.profit.iter_mut().zip(&salvage) {
            *r += s;
        }
    }
    Ok(SimTrace { records, salvage })
}
