mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use invab_core::experiment::{self, ExperimentConfig, ResultSet, RngPolicy, SummaryRow};
use invab_core::oracle::{self, check_condition10, OracleMode};
use invab_core::preset::{build_preset, Figure};
use invab_core::Error;
use serde::Serialize;

use config::{ConfigDocument, ConfigError, OracleModeName, OutputFormat, ScenarioSource};

#[derive(Parser)]
#[command(name = "invab", version, about = "Capacity-constrained inventory A/B experiment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated experiments and export raw and summary results.
    Run(Overrides),
    /// Closed-form bias of each design's IPW estimator.
    Bias(Overrides),
    /// Assumption and condition verdicts for a scenario.
    Check(Overrides),
    /// Run all six panels of a figure.
    Reproduce {
        #[arg(value_parser = parse_figure)]
        figure: Figure,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the default config document.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Default)]
struct Overrides {
    /// JSON config document; flags override its values.
    #[arg(long, env = "INVAB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "INVAB_PRESET")]
    preset: Option<String>,
    #[arg(long, env = "INVAB_REPS")]
    reps: Option<usize>,
    #[arg(long, env = "INVAB_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "INVAB_THREADS")]
    threads: Option<usize>,
    #[arg(long, env = "INVAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, env = "INVAB_FORMAT")]
    format: Option<OutputFormat>,
    #[arg(long, value_enum, env = "INVAB_CRN")]
    crn: Option<Switch>,
    #[arg(long, env = "INVAB_P")]
    p: Option<f64>,
    #[arg(long, value_enum, env = "INVAB_MODE")]
    mode: Option<OracleModeName>,
    #[arg(long, env = "INVAB_GTE_REPS")]
    gte_reps: Option<usize>,
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Resource(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Resource(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InvalidDesign(_) | Error::Infeasible { .. } => Failure::Config(e.to_string()),
            Error::Resource(_) => Failure::Resource(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(o) => load(&o).and_then(|doc| cmd_run(&doc)),
        Command::Bias(o) => load(&o).and_then(|doc| cmd_bias(&doc)),
        Command::Check(o) => load(&o).and_then(|doc| cmd_check(&doc)),
        Command::Reproduce { figure, overrides } => load(&overrides).and_then(|doc| cmd_reproduce(figure, &doc)),
        Command::DefaultConfig => {
            println!("{}", ConfigDocument::default().to_pretty_json());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn load(o: &Overrides) -> Result<ConfigDocument, Failure> {
    let mut doc = match &o.config {
        Some(path) => ConfigDocument::load(path)?,
        None => ConfigDocument::empty(),
    };
    if let Some(preset) = &o.preset {
        let id = preset.parse().map_err(|e: Error| Failure::Config(format!("--preset: {e}")))?;
        doc.scenario = Some(ScenarioSource::Preset(id));
    }
    if let Some(reps) = o.reps {
        doc.reps = reps;
    }
    if let Some(seed) = o.seed {
        doc.seed = seed;
    }
    if let Some(threads) = o.threads {
        doc.threads = Some(threads);
    }
    if let Some(out) = &o.out {
        doc.output.dir = out.clone();
    }
    if let Some(format) = o.format {
        doc.output.format = format;
    }
    if let Some(crn) = o.crn {
        doc.crn = matches!(crn, Switch::On);
    }
    if let Some(p) = o.p {
        doc.p = p;
    }
    if let Some(mode) = o.mode {
        doc.mode = mode;
    }
    if let Some(gte_reps) = o.gte_reps {
        doc.gte_reps = gte_reps;
    }
    doc.validate()?;
    if let Some(threads) = doc.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(doc)
}

fn experiment_config(doc: &ConfigDocument, horizon: usize) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig {
        designs: doc.design_specs(horizon)?,
        reps: doc.reps,
        rng: RngPolicy::new(doc.seed, doc.crn),
        gte_reps: doc.gte_reps,
    })
}

/// Files written for one result set, relative to the output directory.
#[derive(Serialize)]
struct Written {
    raw: PathBuf,
    summary: Option<PathBuf>,
}

fn write_results(dir: &Path, stem: &str, format: OutputFormat, results: &ResultSet, rows: &[SummaryRow]) -> Result<Written, Failure> {
    fs::create_dir_all(dir)?;
    match format {
        OutputFormat::Csv => {
            let raw = PathBuf::from(format!("{stem}_raw.csv"));
            let summary = PathBuf::from(format!("{stem}_summary.csv"));
            experiment::write_raw_csv(results, BufWriter::new(File::create(dir.join(&raw))?))?;
            experiment::write_summary_csv(rows, BufWriter::new(File::create(dir.join(&summary))?))?;
            Ok(Written {
                raw,
                summary: Some(summary),
            })
        }
        OutputFormat::Json => {
            let raw = PathBuf::from(format!("{stem}.json"));
            let mut file = BufWriter::new(File::create(dir.join(&raw))?);
            serde_json::to_writer_pretty(&mut file, &experiment::to_json(results, rows)).map_err(Error::from)?;
            file.flush()?;
            Ok(Written { raw, summary: None })
        }
    }
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<10} {:<6} {:<4} {:>12} {:>12} {:>12}", "design", "est", "n", "mean", "sd", "bias");
    for row in rows {
        let sd = row.sd.map_or_else(|| "-".to_string(), |sd| format!("{sd:.6}"));
        println!(
            "{:<10} {:<6} {:<4} {:>12.6} {:>12} {:>12.6}",
            row.design.as_str(),
            row.estimator.as_str(),
            row.count,
            row.mean,
            sd,
            row.bias
        );
    }
}

fn cmd_run(doc: &ConfigDocument) -> Outcome {
    let (id, scenario) = doc.resolve_scenario()?;
    let config = experiment_config(doc, scenario.horizon())?;
    let results = experiment::run_experiment(&id, &scenario, &config)?;
    let rows = experiment::summarize(&results)?;
    let written = write_results(&doc.output.dir, &id, doc.output.format, &results, &rows)?;
    println!("scenario {id}: true GTE {} ({} GT/GC replications)", results.gte.value, doc.gte_reps);
    print_summary(&rows);
    println!("wrote {}", doc.output.dir.join(&written.raw).display());
    Ok(())
}

fn cmd_bias(doc: &ConfigDocument) -> Outcome {
    let (_, scenario) = doc.resolve_scenario()?;
    let mode = match doc.mode {
        OracleModeName::Enumerate => OracleMode::Enumerate,
        OracleModeName::Mc => OracleMode::MonteCarlo {
            reps: doc.mc_reps,
            seed: doc.seed,
        },
    };
    let reports = doc
        .design_specs(scenario.horizon())?
        .iter()
        .map(|design| oracle::design_bias(&scenario, design, mode))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&reports).map_err(Error::from)?);
    Ok(())
}

fn cmd_check(doc: &ConfigDocument) -> Outcome {
    let (id, scenario) = doc.resolve_scenario()?;
    let essinf = scenario.essential_infima();
    let checks = vec![
        scenario.check_assumption1(),
        scenario.check_assumption2_sw(&essinf)?,
        scenario.check_assumption3(&essinf)?,
        check_condition10(&scenario)?,
    ];
    match doc.output.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&checks).map_err(Error::from)?),
        OutputFormat::Csv => {
            println!("scenario {id}");
            println!("{:<14} {:<6} {:>8} {:>8}", "condition", "holds", "failing", "cells");
            for check in &checks {
                println!(
                    "{:<14} {:<6} {:>8} {:>8}",
                    check.name,
                    check.holds,
                    check.failures().count(),
                    check.cells.len()
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PanelEntry {
    scenario: String,
    true_gte: f64,
    #[serde(flatten)]
    files: Written,
}

#[derive(Serialize)]
struct Manifest {
    figure: Figure,
    reps: usize,
    seed: u64,
    crn: bool,
    p: f64,
    gte_reps: usize,
    panels: Vec<PanelEntry>,
}

fn cmd_reproduce(figure: Figure, doc: &ConfigDocument) -> Outcome {
    let mut panels = Vec::new();
    for id in figure.panels() {
        let preset = build_preset(id)?;
        let config = experiment_config(doc, preset.scenario.horizon())?;
        let name = id.to_string();
        let results = experiment::run_experiment(&name, &preset.scenario, &config)?;
        let rows = experiment::summarize(&results)?;
        let files = write_results(&doc.output.dir, &name, doc.output.format, &results, &rows)?;
        println!("{name}: true GTE {}", results.gte.value);
        print_summary(&rows);
        panels.push(PanelEntry {
            scenario: name,
            true_gte: results.gte.value,
            files,
        });
    }
    let manifest = Manifest {
        figure,
        reps: doc.reps,
        seed: doc.seed,
        crn: doc.crn,
        p: doc.p,
        gte_reps: doc.gte_reps,
        panels,
    };
    let path = doc.output.dir.join(format!("{}_manifest.json", figure.as_str()));
    let mut file = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut file, &manifest).map_err(Error::from)?;
    file.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}
