//! Replicated A/B experiments on a scenario, with reproducible random streams
//! and CSV/JSON exports.
//!
//! Every replication draws its assignment and its demand from ChaCha8 streams
//! keyed by `(master seed, scenario id, design, replication, role)`. With
//! common random numbers on, the demand key drops the design so all designs
//! in a replication see the same demand. Results never depend on how many
//! worker threads run them.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{generate, DesignKind, DesignSpec};
use crate::error::{invalid, Error, Result};
use crate::estimate::{diff_in_means, ipw_estimate, true_gte_mc_streams, EstimatorKind, GteReference};
use crate::inventory::{simulate_horizon, Scenario};
use crate::stats::SampleSummary;

pub const DEFAULT_GTE_REPS: usize = 2000;

const Z_95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRole {
    Assignment,
    Demand,
    Gte,
}

impl StreamRole {
    fn code(self) -> u64 {
        match self {
            StreamRole::Assignment => 1,
            StreamRole::Demand => 2,
            StreamRole::Gte => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
    /// Share demand draws across designs within a replication.
    pub crn: bool,
}

impl RngPolicy {
    pub fn new(master_seed: u64, crn: bool) -> Self {
        Self { master_seed, crn }
    }

    /// The stream for one key. Distinct keys give distinct ChaCha keys.
    pub fn stream(&self, scenario: &str, design: Option<DesignKind>, replication: u64, role: StreamRole) -> ChaCha8Rng {
        let design = match (role, self.crn) {
            (StreamRole::Demand, true) | (StreamRole::Gte, _) => 0,
            _ => design.map_or(0, DesignKind::code),
        };
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&fnv1a(scenario.as_bytes()).to_le_bytes());
        seed[16..24].copy_from_slice(&(design << 8 | role.code()).to_le_bytes());
        seed[24..].copy_from_slice(&replication.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replication {
    pub design: DesignKind,
    pub replication: usize,
    pub ipw: f64,
    /// `None` when one arm is empty.
    pub dim: Option<f64>,
}

impl Replication {
    pub fn estimate(&self, estimator: EstimatorKind) -> Option<f64> {
        match estimator {
            EstimatorKind::Ipw => Some(self.ipw),
            EstimatorKind::DiffInMeans => self.dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultSet {
    pub scenario: String,
    pub designs: Vec<DesignSpec>,
    pub reps: usize,
    pub gte: GteReference,
    /// Design-major, then replication order.
    pub replications: Vec<Replication>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub designs: Vec<DesignSpec>,
    pub reps: usize,
    pub rng: RngPolicy,
    pub gte_reps: usize,
}

/// Run every design `reps` times on the scenario and attach a Monte Carlo
/// GTE reference.
pub fn run_experiment(scenario_id: &str, scenario: &Scenario, config: &ExperimentConfig) -> Result<ResultSet> {
    if config.reps == 0 {
        return invalid("an experiment needs at least one replication");
    }
    if config.designs.is_empty() {
        return invalid("an experiment needs at least one design");
    }
    let (n_items, horizon) = (scenario.n_items(), scenario.horizon());
    for design in &config.designs {
        design.validate(horizon)?;
    }
    let policy = config.rng;
    let gte = true_gte_mc_streams(scenario, config.gte_reps, |i| {
        policy.stream(scenario_id, None, i as u64, StreamRole::Gte)
    })?;
    let mut replications = Vec::with_capacity(config.designs.len() * config.reps);
    for design in &config.designs {
        let kind = design.kind;
        let batch = (0..config.reps)
            .into_par_iter()
            .map(|r| {
                let rep = r as u64;
                let mut assign_rng = policy.stream(scenario_id, Some(kind), rep, StreamRole::Assignment);
                let w = generate(design, n_items, horizon, &mut assign_rng)?;
                let mut demand_rng = policy.stream(scenario_id, Some(kind), rep, StreamRole::Demand);
                let demand = scenario.demand().sample_trace(horizon, &mut demand_rng);
                let trace = simulate_horizon(scenario, &w, &demand)?;
                let dim = match diff_in_means(&trace, &w) {
                    Ok(e) => Some(e.value),
                    Err(Error::UndefinedEstimator(_)) => None,
                    Err(e) => return Err(e),
                };
                Ok(Replication {
                    design: kind,
                    replication: r,
                    ipw: ipw_estimate(&trace, &w, design.p)?.value,
                    dim,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        replications.extend(batch);
    }
    Ok(ResultSet {
        scenario: scenario_id.to_string(),
        designs: config.designs.clone(),
        reps: config.reps,
        gte,
        replications,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub design: DesignKind,
    pub estimator: EstimatorKind,
    /// Replications with a defined estimate.
    pub count: usize,
    pub mean: f64,
    /// `None` with fewer than two estimates.
    pub sd: Option<f64>,
    pub bias: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub true_gte: f64,
}

impl SummaryRow {
    pub fn std_error(&self) -> Option<f64> {
        self.sd.map(|sd| sd / (self.count as f64).sqrt())
    }
}

/// Mean, sd, bias against the GTE reference and a normal 95% interval for
/// the mean, per design and estimator.
pub fn summarize(results: &ResultSet) -> Result<Vec<SummaryRow>> {
    if results.replications.is_empty() {
        return invalid("cannot summarize an empty result set");
    }
    let mut rows = Vec::new();
    for design in &results.designs {
        for estimator in EstimatorKind::ALL {
            let values: Vec<f64> = results
                .replications
                .iter()
                .filter(|r| r.design == design.kind)
                .filter_map(|r| r.estimate(estimator))
                .collect();
            let summary = SampleSummary::of(&values);
            let half = summary.std_error().map(|se| Z_95 * se);
            rows.push(SummaryRow {
                scenario: results.scenario.clone(),
                design: design.kind,
                estimator,
                count: summary.count,
                mean: summary.mean,
                sd: summary.sd,
                bias: summary.mean - results.gte.value,
                ci_low: half.map(|h| summary.mean - h),
                ci_high: half.map(|h| summary.mean + h),
                true_gte: results.gte.value,
            });
        }
    }
    Ok(rows)
}

pub fn find_row(rows: &[SummaryRow], design: DesignKind, estimator: EstimatorKind) -> Option<&SummaryRow> {
    rows.iter().find(|r| r.design == design && r.estimator == estimator)
}

pub const RAW_HEADER: [&str; 5] = ["scenario", "design", "estimator", "replication", "estimate"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "scenario", "design", "estimator", "mean", "sd", "bias", "ci_low", "ci_high", "true_gte",
];

fn number(x: Option<f64>) -> String {
    x.unwrap_or(f64::NAN).to_string()
}

/// One row per (design, estimator, replication); undefined estimates are `NaN`.
pub fn write_raw_csv<W: Write>(results: &ResultSet, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RAW_HEADER).map_err(csv_error)?;
    for design in &results.designs {
        for estimator in EstimatorKind::ALL {
            for rep in results.replications.iter().filter(|r| r.design == design.kind) {
                writer
                    .write_record([
                        results.scenario.as_str(),
                        design.kind.as_str(),
                        estimator.as_str(),
                        &rep.replication.to_string(),
                        &number(rep.estimate(estimator)),
                    ])
                    .map_err(csv_error)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    for row in rows {
        writer
            .write_record([
                row.scenario.clone(),
                row.design.as_str().to_string(),
                row.estimator.as_str().to_string(),
                row.mean.to_string(),
                number(row.sd),
                row.bias.to_string(),
                number(row.ci_low),
                number(row.ci_high),
                row.true_gte.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

#[derive(Serialize)]
struct RawJson<'a> {
    scenario: &'a str,
    design: DesignKind,
    estimator: EstimatorKind,
    replication: usize,
    estimate: Option<f64>,
}

/// The raw and summary tables as one JSON document. Undefined values are `null`.
pub fn to_json(results: &ResultSet, rows: &[SummaryRow]) -> serde_json::Value {
    let raw: Vec<RawJson> = results
        .designs
        .iter()
        .flat_map(|design| {
            EstimatorKind::ALL.into_iter().flat_map(move |estimator| {
                results
                    .replications
                    .iter()
                    .filter(move |r| r.design == design.kind)
                    .map(move |r| RawJson {
                        scenario: &results.scenario,
                        design: design.kind,
                        estimator,
                        replication: r.replication,
                        estimate: r.estimate(estimator).filter(|x| x.is_finite()),
                    })
            })
        })
        .collect();
    serde_json::json!({
        "scenario": results.scenario,
        "reps": results.reps,
        "gte": results.gte,
        "raw": raw,
        "summary": rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandModel, Noise};
    use crate::estimate::GteMethod;
    use crate::inventory::ItemParams;

    fn scenario(treatment: f64) -> Scenario {
        let n = 4;
        Scenario::new(
            vec![ItemParams::new(2.0, 1.0).unwrap(); n],
            10.0,
            DemandModel::stationary(n, Noise::Uniform { low: 1.0, width: 3.0 }).unwrap(),
            vec![vec![2.0; 5]; n],
            vec![vec![treatment; 5]; n],
        )
        .unwrap()
    }

    fn config(reps: usize, crn: bool) -> ExperimentConfig {
        ExperimentConfig {
            designs: DesignKind::ALL.iter().map(|k| DesignSpec::standard(*k, 0.5, 5).unwrap()).collect(),
            reps,
            rng: RngPolicy::new(7, crn),
            gte_reps: 50,
        }
    }

    #[test]
    fn streams_are_keyed() {
        use rand::Rng;
        let policy = RngPolicy::new(1, true);
        let draw = |p: &RngPolicy, s: &str, d, r, role| p.stream(s, d, r, role).random::<u64>();
        let base = draw(&policy, "a", Some(DesignKind::IR), 0, StreamRole::Assignment);
        assert_eq!(base, draw(&policy, "a", Some(DesignKind::IR), 0, StreamRole::Assignment));
        assert_ne!(base, draw(&policy, "b", Some(DesignKind::IR), 0, StreamRole::Assignment));
        assert_ne!(base, draw(&policy, "a", Some(DesignKind::SW), 0, StreamRole::Assignment));
        assert_ne!(base, draw(&policy, "a", Some(DesignKind::IR), 1, StreamRole::Assignment));
        assert_ne!(base, draw(&policy, "a", Some(DesignKind::IR), 0, StreamRole::Demand));
        assert_eq!(
            draw(&policy, "a", Some(DesignKind::IR), 3, StreamRole::Demand),
            draw(&policy, "a", Some(DesignKind::PR), 3, StreamRole::Demand)
        );
        let independent = RngPolicy::new(1, false);
        assert_ne!(
            draw(&independent, "a", Some(DesignKind::IR), 3, StreamRole::Demand),
            draw(&independent, "a", Some(DesignKind::PR), 3, StreamRole::Demand)
        );
    }

    #[test]
    fn run_and_summarize() {
        let results = run_experiment("toy", &scenario(3.0), &config(20, true)).unwrap();
        assert_eq!(results.replications.len(), 80);
        assert_eq!(results.gte.method, GteMethod::MonteCarlo);
        let rows = summarize(&results).unwrap();
        assert_eq!(rows.len(), 8);
        let again = run_experiment("toy", &scenario(3.0), &config(20, true)).unwrap();
        assert_eq!(results, again);
    }

    #[test]
    fn null_scenario_has_zero_gte() {
        let results = run_experiment("null", &scenario(2.0), &config(10, true)).unwrap();
        assert_eq!(results.gte.value, 0.0);
    }

    #[test]
    fn summary_statistics() {
        let results = ResultSet {
            scenario: "s".into(),
            designs: vec![DesignSpec::new(DesignKind::SW, 0.5)],
            reps: 3,
            gte: GteReference {
                value: 0.5,
                method: GteMethod::Analytic,
                ci_halfwidth: None,
                reps: None,
            },
            replications: (1..=3)
                .map(|i| Replication {
                    design: DesignKind::SW,
                    replication: i - 1,
                    ipw: i as f64,
                    dim: (i < 2).then_some(4.0),
                })
                .collect(),
        };
        let rows = summarize(&results).unwrap();
        let ipw = find_row(&rows, DesignKind::SW, EstimatorKind::Ipw).unwrap();
        assert_eq!((ipw.mean, ipw.sd, ipw.bias), (2.0, Some(1.0), 1.5));
        let dim = find_row(&rows, DesignKind::SW, EstimatorKind::DiffInMeans).unwrap();
        assert_eq!((dim.count, dim.sd, dim.ci_low), (1, None, None));

        let mut raw = Vec::new();
        write_raw_csv(&results, &mut raw).unwrap();
        let raw = String::from_utf8(raw).unwrap();
        let lines: Vec<&str> = raw.lines().collect();
        assert_eq!(lines[0], "scenario,design,estimator,replication,estimate");
        assert_eq!(lines[1], "s,SW,ipw,0,1");
        assert_eq!(lines[5], "s,SW,dim,1,NaN");

        let mut summary = Vec::new();
        write_summary_csv(&rows, &mut summary).unwrap();
        let summary = String::from_utf8(summary).unwrap();
        assert!(summary.starts_with("scenario,design,estimator,mean,sd,bias,ci_low,ci_high,true_gte\n"));
        assert!(summary.contains("s,SW,dim,4,NaN,3.5,NaN,NaN,0.5"));

        let json = to_json(&results, &rows);
        assert_eq!(json["raw"].as_array().unwrap().len(), 6);
        assert!(json["raw"][5]["estimate"].is_null());
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(run_experiment("x", &scenario(3.0), &config(0, true)).is_err());
    }
}
