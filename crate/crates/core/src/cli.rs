//! Command-line front end: simulate, prepare, fit, report, recover.
//!
//! Settings come from flags and an optional TOML file (`--config`); flags
//! win. Every command writes a `manifest.json` next to its outputs with the
//! effective settings and SHA-256 digests of all inputs and outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::estimate::{fit_bettors, BettorsSpec, FitResult, OptimizerOptions, StartValues};
use crate::linreg::{fit_model, DesignSpec, RegressionFit};
use crate::panel::{
    apply_sample_filters, compute_volumediff, exclude_closed_market, read_match_files,
    read_panel_csv, read_path, read_volumes_csv, season_volumes, write_panel_csv, write_path,
    write_volumes_csv, Panel,
};
use crate::recovery::{self, RecoveryConfig};
use crate::report;
use crate::simulate::{make_fixture, simulate_season, write_match_files, write_season, SimConfig};
use crate::ssm::{decode_sequence, Grid, SsmData};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "firstgoal",
    version,
    about = "In-play betting market models before the first goal"
)]
pub struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a season (or write a fixture) as ticks.csv and meta.csv.
    Simulate(SimulateArgs),
    /// Aggregate ticks into the per-minute panel.
    Prepare(PrepareArgs),
    /// Fit a bookmaker regression (models 1-4) with match-clustered errors.
    FitBookmaker(FitBookmakerArgs),
    /// Fit a bettors' model to the relative stakes.
    FitBettors(FitBettorsArgs),
    /// Descriptive tables, model comparison and per-match series.
    Report(ReportArgs),
    /// Monte Carlo parameter recovery study.
    Recover(RecoverArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub matches: Option<usize>,
    /// Write a named hand-checkable fixture instead of a simulated season.
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory with ticks.csv and meta.csv.
    #[arg(long)]
    pub input: PathBuf,
    /// Team volumes (team, avg_stake_per_minute) to use for volumediff
    /// instead of the volumes computed from the ticks.
    #[arg(long)]
    pub volumes: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitBookmakerArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Model 1-4.
    #[arg(long)]
    pub model: Option<u8>,
    /// Drop the expected-goals regressor.
    #[arg(long)]
    pub exclude_xg: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Number of grid intervals for the latent state.
    #[arg(long)]
    pub grid_m: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_upper: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitBettorsArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// noss, basic, final or full.
    #[arg(long)]
    pub spec: Option<BettorsSpec>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also write the optimiser trace (trace.csv).
    #[arg(long)]
    pub trace: bool,
    /// Also write decoded latent states (states.csv); state models only.
    #[arg(long)]
    pub decode: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Fit JSON files (bookmaker or bettors) to compare.
    #[arg(long, num_args = 1..)]
    pub fits: Vec<PathBuf>,
    /// Match ids to export as plot series.
    #[arg(long = "match", num_args = 1..)]
    pub matches: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Retained matches per replication.
    #[arg(long)]
    pub matches: Option<usize>,
    #[arg(long)]
    pub spec: Option<BettorsSpec>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also fit the no-state model and record its AIC.
    #[arg(long)]
    pub compare_no_state: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub matches: Option<usize>,
    pub fixture: Option<String>,
    pub simulation: Option<SimConfig>,
    pub model: Option<u8>,
    pub exclude_xg: Option<bool>,
    pub spec: Option<BettorsSpec>,
    pub grid: Option<Grid>,
    pub optimizer: Option<OptimizerOptions>,
    pub start: Option<StartValues>,
    pub replications: Option<usize>,
    pub compare_no_state: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn grid(&self, args: &GridArgs) -> Result<Grid> {
        let mut grid = self.grid.unwrap_or_default();
        if let Some(m) = args.grid_m {
            grid.m = m;
        }
        if let Some(v) = args.grid_lower {
            grid.lower = v;
        }
        if let Some(v) = args.grid_upper {
            grid.upper = v;
        }
        grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(grid)
    }

    fn optimizer(&self, args: &GridArgs) -> OptimizerOptions {
        let mut opts = self.optimizer.unwrap_or_default();
        if let Some(n) = args.max_iter {
            opts.max_iter = n;
        }
        opts
    }
}

/// Effective settings of one run, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
struct FileDigest {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    config: RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn digest(path: &Path) -> Result<FileDigest> {
    let file = path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    Ok(FileDigest {
        file,
        sha256: sha256_hex(path)?,
    })
}

/// Inputs are recorded by file name and digest so that manifests do not
/// depend on where a run was started from.
fn write_manifest(
    out: &Path,
    config: RunConfig,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|f| digest(&out.join(f)))
            .collect::<Result<_>>()?,
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_path(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        std::io::Write::write_all(f, b"\n").map_err(|e| Error::io(path, e))
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn settings<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&file, a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::FitBookmaker(a) => cmd_fit_bookmaker(&file, a),
        Command::FitBettors(a) => cmd_fit_bettors(&file, a),
        Command::Report(a) => cmd_report(a),
        Command::Recover(a) => cmd_recover(&file, a),
    }
}

pub fn cmd_simulate(file: &FileConfig, a: SimulateArgs) -> Result<()> {
    create_dir(&a.out)?;
    if let Some(name) = a.fixture.or_else(|| file.fixture.clone()) {
        let matches = make_fixture(&name).map_err(|e| Error::Config(e.to_string()))?;
        write_match_files(&a.out, &matches)?;
        let config = RunConfig {
            command: "simulate".into(),
            seed: None,
            settings: serde_json::json!({ "fixture": name }),
        };
        return write_manifest(&a.out, config, &[], &["ticks.csv", "meta.csv"]);
    }
    let mut sim = file.simulation.clone().unwrap_or_default();
    if let Some(seed) = a.seed.or(file.seed) {
        sim.seed = seed;
    }
    if let Some(n) = a.matches.or(file.matches) {
        sim.n_matches = n;
    }
    sim.validate().map_err(|e| Error::Config(e.to_string()))?;
    let season = simulate_season(&sim)?;
    write_season(&a.out, &season)?;
    let config = RunConfig {
        command: "simulate".into(),
        seed: Some(sim.seed),
        settings: settings(&sim)?,
    };
    write_manifest(
        &a.out,
        config,
        &[],
        &["ticks.csv", "meta.csv", "volumes.csv", "truth.json"],
    )
}

pub fn cmd_prepare(a: PrepareArgs) -> Result<()> {
    let matches = read_match_files(&a.input)?;
    let (panel, filter) = apply_sample_filters(&matches)?;
    let volumes = match &a.volumes {
        Some(p) => read_path(p, read_volumes_csv)?,
        None => season_volumes(&matches)?,
    };
    let panel = compute_volumediff(panel, &volumes)?;
    create_dir(&a.out)?;
    write_path(&a.out.join("panel.csv"), |f| write_panel_csv(&panel, f))?;
    write_path(&a.out.join("volumes.csv"), |f| {
        write_volumes_csv(&volumes, f)
    })?;
    write_json(&a.out.join("filter_report.json"), &filter)?;
    let config = RunConfig {
        command: "prepare".into(),
        seed: None,
        settings: serde_json::json!({}),
    };
    let mut inputs = vec![a.input.join("ticks.csv"), a.input.join("meta.csv")];
    inputs.extend(a.volumes.clone());
    write_manifest(
        &a.out,
        config,
        &inputs,
        &["panel.csv", "volumes.csv", "filter_report.json"],
    )
}

fn load_panel(path: &Path) -> Result<Panel> {
    read_path(path, read_panel_csv)
}

pub fn cmd_fit_bookmaker(file: &FileConfig, a: FitBookmakerArgs) -> Result<()> {
    let model = a
        .model
        .or(file.model)
        .ok_or_else(|| Error::Config("--model is required".into()))?;
    let spec = DesignSpec {
        exclude_xg: a.exclude_xg || file.exclude_xg.unwrap_or(false),
        ..DesignSpec::model(model)?
    };
    let panel = load_panel(&a.panel)?;
    let fit = fit_model(&panel, &spec)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("fit.json"), &fit)?;
    let config = RunConfig {
        command: "fit-bookmaker".into(),
        seed: None,
        settings: settings(&spec)?,
    };
    write_manifest(
        &a.out,
        config,
        std::slice::from_ref(&a.panel),
        &["fit.json"],
    )
}

#[derive(Debug, Serialize)]
struct DecodedRow<'a> {
    match_id: &'a str,
    t: u32,
    viterbi: f64,
    smoothed_mean: f64,
    smoothed_sd: f64,
}

pub fn cmd_fit_bettors(file: &FileConfig, a: FitBettorsArgs) -> Result<()> {
    let spec = a
        .spec
        .or(file.spec)
        .ok_or_else(|| Error::Config("--spec is required".into()))?;
    let mut options = crate::estimate::FitOptions {
        grid: file.grid(&a.grid)?,
        optimizer: file.optimizer(&a.grid),
        ..Default::default()
    };
    if let Some(start) = &file.start {
        options.start = start.clone();
    }
    let (panel, _) = exclude_closed_market(&load_panel(&a.panel)?);
    let data = SsmData::from_panel(&panel, &spec.covariates())?;
    let fit = fit_bettors(&data, spec, &options)?;
    create_dir(&a.out)?;
    fit.write_json(&a.out.join("fit.json"))?;
    let mut outputs = vec!["fit.json"];
    if a.trace {
        fit.write_trace_csv(&a.out.join("trace.csv"))?;
        outputs.push("trace.csv");
    }
    if a.decode {
        let params = fit
            .natural()
            .to_ssm()
            .ok_or_else(|| Error::Config(format!("--decode needs a state model, not {spec}")))?;
        let mut rows = Vec::new();
        let mut decoded = Vec::new();
        for (series, seq) in panel.matches.iter().zip(&data.sequences) {
            decoded.push((series, decode_sequence(seq, &params, &options.grid)?));
        }
        for (series, d) in &decoded {
            for (i, o) in series.observations.iter().enumerate() {
                rows.push(DecodedRow {
                    match_id: &series.match_id,
                    t: o.t,
                    viterbi: d.viterbi[i],
                    smoothed_mean: d.smoothed_mean[i],
                    smoothed_sd: d.smoothed_sd[i],
                });
            }
        }
        write_path(&a.out.join("states.csv"), |f| {
            let mut w = csv::Writer::from_writer(f);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io("states.csv", e))
        })?;
        outputs.push("states.csv");
    }
    let config = RunConfig {
        command: "fit-bettors".into(),
        seed: None,
        settings: serde_json::json!({ "spec": spec, "fit": options }),
    };
    write_manifest(&a.out, config, std::slice::from_ref(&a.panel), &outputs)?;
    if !fit.converged {
        return Err(Error::Estimation(format!(
            "{spec} fit did not converge: {} (gradient max-norm {:.3e}); see {}",
            fit.message,
            fit.gradient_max_norm,
            a.out.join("fit.json").display()
        )));
    }
    Ok(())
}

/// Either kind of fit file, told apart by its fields.
fn load_model_entry(path: &Path) -> Result<report::ModelEntry> {
    let value: serde_json::Value = read_path(path, |f| {
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    })?;
    if value.get("model_id").is_some() {
        let fit: RegressionFit = serde_json::from_value(value)?;
        Ok((&fit).into())
    } else {
        let fit: FitResult = serde_json::from_value(value)?;
        Ok((&fit).into())
    }
}

pub fn cmd_report(a: ReportArgs) -> Result<()> {
    let panel = load_panel(&a.panel)?;
    create_dir(&a.out)?;
    let summary = report::summarize(&panel)?;
    let mut md = String::from("# Summary statistics\n\n");
    md.push_str(&report::summary_markdown(&summary));
    let mut outputs = vec!["summary.md".to_string(), "correlations.csv".to_string()];

    let corr = report::correlations(&panel)?;
    write_path(&a.out.join("correlations.csv"), |f| {
        report::write_correlations_csv(&corr, f)
    })?;

    if !a.fits.is_empty() {
        let entries = a
            .fits
            .iter()
            .map(|p| load_model_entry(p))
            .collect::<Result<Vec<_>>>()?;
        // Only models fitted to the same sample are comparable.
        let mut groups: BTreeMap<usize, Vec<report::ModelEntry>> = BTreeMap::new();
        for e in entries {
            groups.entry(e.n_obs).or_default().push(e);
        }
        let mut rows = Vec::new();
        md.push_str("\n# Model comparison\n");
        for group in groups.values() {
            let cmp = report::compare_models(group)?;
            md.push('\n');
            md.push_str(&report::comparison_markdown(&cmp));
            rows.extend(cmp);
        }
        write_path(&a.out.join("model_comparison.csv"), |f| {
            report::write_comparison_csv(&rows, f)
        })?;
        outputs.push("model_comparison.csv".into());
    }
    for id in &a.matches {
        let series = report::export_match_series(&panel, id)?;
        let name = format!("match_{id}_series.csv");
        write_path(&a.out.join(&name), |f| report::write_series_csv(&series, f))?;
        outputs.push(name);
    }
    write_path(&a.out.join("summary.md"), |f| {
        std::io::Write::write_all(f, md.as_bytes()).map_err(|e| Error::io("summary.md", e))
    })?;
    let mut inputs = vec![a.panel.clone()];
    inputs.extend(a.fits.iter().cloned());
    let config = RunConfig {
        command: "report".into(),
        seed: None,
        settings: serde_json::json!({ "matches": a.matches }),
    };
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&a.out, config, &inputs, &names)
}

pub fn cmd_recover(file: &FileConfig, a: RecoverArgs) -> Result<()> {
    let spec = a.spec.or(file.spec).unwrap_or(BettorsSpec::Basic);
    let mut config = RecoveryConfig::for_spec(spec);
    if let Some(sim) = &file.simulation {
        config.simulation = sim.clone();
    }
    if let Some(n) = a.replications.or(file.replications) {
        config.replications = n;
    }
    if let Some(seed) = a.seed.or(file.seed) {
        config.seed = seed;
    }
    if let Some(n) = a.matches.or(file.matches) {
        config.matches = n;
    }
    config.compare_no_state = a.compare_no_state || file.compare_no_state.unwrap_or(false);
    config.fit.grid = file.grid(&a.grid)?;
    config.fit.optimizer = file.optimizer(&a.grid);
    if let Some(start) = &file.start {
        config.fit.start = start.clone();
    }
    if config.replications == 0 || config.matches == 0 {
        return Err(Error::Config(
            "replications and matches must be positive".into(),
        ));
    }
    config
        .simulation
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;

    let reps = recovery::run_study(&config)?;
    let coverage = recovery::coverage_summary(&reps);
    create_dir(&a.out)?;
    write_path(&a.out.join("recovery_rows.csv"), |f| {
        recovery::write_rows_csv(&reps, f)
    })?;
    write_path(&a.out.join("coverage.csv"), |f| {
        recovery::write_coverage_csv(&coverage, f)
    })?;
    write_json(&a.out.join("replications.json"), &reps)?;
    let run = RunConfig {
        command: "recover".into(),
        seed: Some(config.seed),
        settings: settings(&config)?,
    };
    write_manifest(
        &a.out,
        run,
        &[],
        &["recovery_rows.csv", "coverage.csv", "replications.json"],
    )
}
