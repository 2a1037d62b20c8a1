//! The benchmark scenarios: four item categories with seasonal demand, run
//! at three capacity levels (Normal noise) or three base-stock quantile
//! levels (Uniform noise), in stationary and non-stationary settings.
//!
//! Preset ids look like `fig2-stationary-tight` or
//! `fig3-nonstationary-high`; a `-null` suffix sets `s^T := s^C`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandModel, ItemDemand, Noise, SEASON_LENGTH};
use crate::error::{Error, Result};
use crate::inventory::{ItemParams, Scenario};

pub const DEFAULT_ITEMS: usize = 1400;
pub const DEFAULT_HORIZON: usize = 15;

const CATEGORIES: usize = 4;
const PRICES: [f64; CATEGORIES] = [2.0, 1.75, 1.5, 1.25];
const NORMAL_MEANS: [f64; CATEGORIES] = [4.0, 4.5, 5.0, 5.5];
const NORMAL_VARIANCE: f64 = 1.5;
const UNIFORM_LOWS: [f64; CATEGORIES] = [3.5, 4.0, 4.5, 5.0];
const UNIFORM_WIDTH: f64 = 3.0;
const AMPLITUDES: [f64; CATEGORIES] = [0.5, 0.6, 0.7, 0.8];
const PHASES: [f64; CATEGORIES] = [0.0, -0.25, -0.5, -0.75];
const DEMAND_TREND: f64 = 0.1;
const CONTROL_TREND: f64 = 0.05;
const TREATMENT_TREND: f64 = 0.1;
const CONTROL_PHASE_LAG: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Stationary,
    Nonstationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityLevel {
    Tight,
    Medium,
    Loose,
}

impl CapacityLevel {
    pub const ALL: [CapacityLevel; 3] = [CapacityLevel::Tight, CapacityLevel::Medium, CapacityLevel::Loose];

    /// Weight on the treatment schedule in the capacity mix.
    pub fn treatment_weight(self) -> f64 {
        match self {
            CapacityLevel::Tight => 0.2,
            CapacityLevel::Medium => 0.5,
            CapacityLevel::Loose => 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileLevel {
    Low,
    Medium,
    High,
}

impl QuantileLevel {
    pub const ALL: [QuantileLevel; 3] = [QuantileLevel::Low, QuantileLevel::Medium, QuantileLevel::High];

    /// Offsets `(treatment, control)` added to `a_n`.
    pub fn offsets(self) -> (f64, f64) {
        match self {
            QuantileLevel::Low => (0.5, 0.0),
            QuantileLevel::Medium => (1.5, 1.0),
            QuantileLevel::High => (3.0, 2.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Study {
    Capacity(CapacityLevel),
    Quantile(QuantileLevel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Fig2,
    Fig3,
}

impl Figure {
    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }

    /// The six panels, stationary first.
    pub fn panels(self) -> Vec<PresetId> {
        let mut out = Vec::with_capacity(6);
        for setting in [Setting::Stationary, Setting::Nonstationary] {
            match self {
                Figure::Fig2 => out.extend(CapacityLevel::ALL.map(|l| PresetId::new(Study::Capacity(l), setting))),
                Figure::Fig3 => out.extend(QuantileLevel::ALL.map(|l| PresetId::new(Study::Quantile(l), setting))),
            }
        }
        out
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            _ => Err(Error::InvalidInput(format!("unknown figure {s:?}, expected fig2 or fig3"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PresetId {
    pub study: Study,
    pub setting: Setting,
    pub null: bool,
}

impl PresetId {
    pub fn new(study: Study, setting: Setting) -> Self {
        Self {
            study,
            setting,
            null: false,
        }
    }

    pub fn with_null(mut self) -> Self {
        self.null = true;
        self
    }

    pub fn figure(&self) -> Figure {
        match self.study {
            Study::Capacity(_) => Figure::Fig2,
            Study::Quantile(_) => Figure::Fig3,
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let setting = match self.setting {
            Setting::Stationary => "stationary",
            Setting::Nonstationary => "nonstationary",
        };
        let level = match self.study {
            Study::Capacity(CapacityLevel::Tight) => "tight",
            Study::Capacity(CapacityLevel::Medium) | Study::Quantile(QuantileLevel::Medium) => "medium",
            Study::Capacity(CapacityLevel::Loose) => "loose",
            Study::Quantile(QuantileLevel::Low) => "low",
            Study::Quantile(QuantileLevel::High) => "high",
        };
        write!(f, "{}-{setting}-{level}", self.figure().as_str())?;
        if self.null {
            f.write_str("-null")?;
        }
        Ok(())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::InvalidInput(format!("unknown preset {s:?}"));
        let (body, null) = match s.strip_suffix("-null") {
            Some(body) => (body, true),
            None => (s, false),
        };
        let mut parts = body.split('-');
        let (Some(figure), Some(setting), Some(level), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(unknown());
        };
        let setting = match setting {
            "stationary" => Setting::Stationary,
            "nonstationary" => Setting::Nonstationary,
            _ => return Err(unknown()),
        };
        let study = match (figure, level) {
            ("fig2", "tight") => Study::Capacity(CapacityLevel::Tight),
            ("fig2", "medium") => Study::Capacity(CapacityLevel::Medium),
            ("fig2", "loose") => Study::Capacity(CapacityLevel::Loose),
            ("fig3", "low") => Study::Quantile(QuantileLevel::Low),
            ("fig3", "medium") => Study::Quantile(QuantileLevel::Medium),
            ("fig3", "high") => Study::Quantile(QuantileLevel::High),
            _ => return Err(unknown()),
        };
        Ok(Self { study, setting, null })
    }
}

impl Serialize for PresetId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PresetId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioPreset {
    pub id: PresetId,
    pub scenario: Scenario,
}

/// `(1/H) Σ_n (w Σ_t s^T_{n,t} + (1 - w) Σ_t s^C_{n,t})`.
pub fn mixed_capacity(control: &[Vec<f64>], treatment: &[Vec<f64>], treatment_weight: f64) -> f64 {
    let horizon = control.first().map_or(1, Vec::len) as f64;
    let sum = |rows: &[Vec<f64>]| rows.iter().flatten().sum::<f64>();
    (treatment_weight * sum(treatment) + (1.0 - treatment_weight) * sum(control)) / horizon
}

fn category(n: usize, n_items: usize) -> usize {
    n * CATEGORIES / n_items
}

/// `k t + (A/2) sin(2π(t + φ)/7) + base` over periods `t = 1..=H`.
fn level_schedule(trend: f64, amplitude: f64, phase: f64, base: f64, horizon: usize) -> Vec<f64> {
    (1..=horizon)
        .map(|t| {
            let t = t as f64;
            trend * t + amplitude / 2.0 * (2.0 * PI * (t + phase) / SEASON_LENGTH).sin() + base
        })
        .collect()
}

struct Layout {
    n_items: usize,
    horizon: usize,
    setting: Setting,
}

impl Layout {
    fn seasonal(&self, cat: usize) -> (f64, f64) {
        match self.setting {
            Setting::Stationary => (0.0, 0.0),
            Setting::Nonstationary => (AMPLITUDES[cat], PHASES[cat]),
        }
    }

    fn trends(&self) -> (f64, f64, f64) {
        match self.setting {
            Setting::Stationary => (0.0, 0.0, 0.0),
            Setting::Nonstationary => (DEMAND_TREND, CONTROL_TREND, TREATMENT_TREND),
        }
    }

    fn items(&self) -> Result<Vec<ItemParams>> {
        (0..self.n_items)
            .map(|n| {
                let price = PRICES[category(n, self.n_items)];
                ItemParams::new(price, price / 2.0)
            })
            .collect()
    }

    fn demand(&self, noise: impl Fn(usize) -> Noise) -> Result<DemandModel> {
        let items = (0..self.n_items)
            .map(|n| {
                let cat = category(n, self.n_items);
                let (amplitude, phase) = self.seasonal(cat);
                ItemDemand::seasonal(noise(cat), amplitude, phase)
            })
            .collect();
        Ok(DemandModel::new(items)?.with_trend(self.trends().0))
    }

    /// Control and treatment schedules from per-category bases and phase lags.
    fn schedules(&self, bases: impl Fn(usize) -> (f64, f64), lags: (f64, f64)) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (_, k_control, k_treatment) = self.trends();
        let (mut control, mut treatment) = (Vec::new(), Vec::new());
        for n in 0..self.n_items {
            let cat = category(n, self.n_items);
            let (amplitude, phase) = self.seasonal(cat);
            let (base_c, base_t) = bases(cat);
            control.push(level_schedule(k_control, amplitude, phase - lags.0, base_c, self.horizon));
            treatment.push(level_schedule(k_treatment, amplitude, phase - lags.1, base_t, self.horizon));
        }
        (control, treatment)
    }
}

/// Capacity study scenario at the default size.
pub fn build_scenario_41(setting: Setting, level: CapacityLevel) -> Result<ScenarioPreset> {
    build_preset_sized(PresetId::new(Study::Capacity(level), setting), DEFAULT_ITEMS, DEFAULT_HORIZON)
}

/// Supply-demand (quantile) study scenario at the default size.
pub fn build_scenario_42(setting: Setting, level: QuantileLevel) -> Result<ScenarioPreset> {
    build_preset_sized(PresetId::new(Study::Quantile(level), setting), DEFAULT_ITEMS, DEFAULT_HORIZON)
}

pub fn build_preset(id: PresetId) -> Result<ScenarioPreset> {
    build_preset_sized(id, DEFAULT_ITEMS, DEFAULT_HORIZON)
}

/// A preset with the same per-category parameters on a different grid.
/// `n_items` must be a positive multiple of 4.
pub fn build_preset_sized(id: PresetId, n_items: usize, horizon: usize) -> Result<ScenarioPreset> {
    if n_items == 0 || n_items % CATEGORIES != 0 || horizon == 0 {
        return Err(Error::InvalidInput(format!(
            "presets need a positive multiple of {CATEGORIES} items and a positive horizon, got {n_items}×{horizon}"
        )));
    }
    let layout = Layout {
        n_items,
        horizon,
        setting: id.setting,
    };
    let scenario = match id.study {
        Study::Capacity(level) => {
            let demand = layout.demand(|cat| Noise::Normal {
                mean: NORMAL_MEANS[cat],
                std_dev: NORMAL_VARIANCE.sqrt(),
            })?;
            let lags = match id.setting {
                Setting::Stationary => (0.0, 0.0),
                Setting::Nonstationary => (CONTROL_PHASE_LAG, 0.0),
            };
            let (control, treatment) = layout.schedules(|cat| (0.8 * NORMAL_MEANS[cat], NORMAL_MEANS[cat]), lags);
            let capacity = mixed_capacity(&control, &treatment, level.treatment_weight());
            Scenario::new(layout.items()?, capacity, demand, control, treatment)?
        }
        Study::Quantile(level) => {
            let demand = layout.demand(|cat| Noise::Uniform {
                low: UNIFORM_LOWS[cat],
                width: UNIFORM_WIDTH,
            })?;
            let lags = match id.setting {
                Setting::Stationary => (0.0, 0.0),
                Setting::Nonstationary => (CONTROL_PHASE_LAG, CONTROL_PHASE_LAG),
            };
            let (dt, dc) = level.offsets();
            let (control, treatment) = layout.schedules(|cat| (UNIFORM_LOWS[cat] + dc, UNIFORM_LOWS[cat] + dt), lags);
            let capacity = mixed_capacity(&control, &treatment, 0.5);
            Scenario::new(layout.items()?, capacity, demand, control, treatment)?
        }
    };
    let scenario = if id.null { scenario.null_effect() } else { scenario };
    Ok(ScenarioPreset { id, scenario })
}
