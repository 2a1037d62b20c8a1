//! Multi-item inventory simulation under a shared capacity constraint, with
//! tools for measuring how A/B test designs bias the IPW estimate of the
//! global treatment effect.
//!
//! Items follow base-stock policies with lost sales and zero lead time. When
//! the predetermined order-up-to levels exceed the capacity, all levels are
//! scaled down proportionally, which couples items that sit in different
//! experiment arms.

pub mod demand;
pub mod design;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod inventory;
pub mod oracle;
pub mod preset;
pub mod stats;

pub use demand::{DemandModel, ItemDemand, Noise};
pub use design::{generate, inclusion_probability, sr_distribution, AssignmentMatrix, DesignKind, DesignSpec, RolloutShape};
pub use error::{Error, Result};
pub use estimate::{diff_in_means, ipw_estimate, EstimateResult, EstimatorKind, GteMethod, GteReference};
pub use inventory::{simulate_horizon, ItemParams, Scenario, SimTrace};
pub use oracle::{BiasReport, OracleMode};
pub use experiment::{run_experiment, summarize, ExperimentConfig, ResultSet, RngPolicy, SummaryRow};
pub use preset::{build_preset, build_scenario_41, build_scenario_42, PresetId, ScenarioPreset};
