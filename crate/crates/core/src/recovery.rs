//! Monte Carlo recovery studies: simulate, prepare, fit, compare to truth.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::estimate::{fit_beinf_glm, fit_bettors, BettorsSpec, FitOptions, FitResult};
use crate::panel::{
    apply_sample_filters, compute_volumediff, exclude_closed_market, season_volumes, MatchData,
    Panel,
};
use crate::simulate::{simulate_season, BettorsRule, SimConfig};
use crate::ssm::{self, SsmData, SsmParams};
use crate::{Error, Result};

/// The bettors' panel as the models see it: filtered, with `volumediff`
/// from `volumes` (the season's own stake volumes if `None`), and
/// closed-market minutes removed.
pub fn bettors_panel(
    matches: &[MatchData],
    volumes: Option<&BTreeMap<String, f64>>,
) -> Result<Panel> {
    let (panel, _) = apply_sample_filters(matches)?;
    let panel = match volumes {
        Some(v) => compute_volumediff(panel, v)?,
        None => compute_volumediff(panel, &season_volumes(matches)?)?,
    };
    Ok(exclude_closed_market(&panel).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub replications: usize,
    pub seed: u64,
    pub spec: BettorsSpec,
    /// Retained matches per replication; the season is simulated with
    /// enough spare matches and cut to this many in match-id order.
    pub matches: usize,
    pub simulation: SimConfig,
    pub fit: FitOptions,
    /// Also fit the no-state model and record its AIC.
    pub compare_no_state: bool,
}

/// Red-card hazard of recovery simulations. At the season default too few
/// red cards fall before the first goal for the red-card coefficients to
/// be identified in every replication.
pub const RECOVERY_RED_CARD_HAZARD: f64 = 0.003;

impl RecoveryConfig {
    /// Defaults with the simulated bettors following the rule of `spec`:
    /// the basic rule for `noss`/`basic`, the final rule otherwise.
    pub fn for_spec(spec: BettorsSpec) -> Self {
        let mut simulation = SimConfig {
            bettors: match spec {
                BettorsSpec::Noss | BettorsSpec::Basic => BettorsRule::basic(),
                BettorsSpec::Final | BettorsSpec::Full => BettorsRule::default(),
            },
            ..SimConfig::default()
        };
        simulation.events.red_card_hazard = RECOVERY_RED_CARD_HAZARD;
        Self {
            replications: 20,
            seed: 1,
            spec,
            matches: 250,
            simulation,
            fit: FitOptions::default(),
            compare_no_state: false,
        }
    }
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self::for_spec(BettorsSpec::Basic)
    }
}

/// One parameter of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub replication: usize,
    pub parameter: String,
    pub truth: f64,
    pub estimate: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: usize,
    pub seed: u64,
    pub n_matches: usize,
    pub n_obs: usize,
    pub converged: bool,
    pub loglik: f64,
    /// Log-likelihood of the fitted model at the generating parameters
    /// (state models only).
    pub loglik_at_truth: Option<f64>,
    pub aic: f64,
    pub no_state_aic: Option<f64>,
    pub rows: Vec<RecoveryRow>,
}

/// Generating values of the parameters a fit reports.
fn truth_values(config: &RecoveryConfig) -> BTreeMap<String, f64> {
    let rule = &config.simulation.bettors;
    let mut t = BTreeMap::new();
    if config.spec.has_state() {
        t.insert("phi".to_string(), rule.state.phi);
        t.insert("sigma_s".to_string(), rule.state.sigma_s);
    }
    for c in config.spec.covariates() {
        t.insert(format!("beta[{}]", c.name()), rule.coefficient(c));
    }
    t.insert("gamma".into(), rule.gamma);
    t.insert("pi".into(), rule.pi);
    t.insert("lambda".into(), rule.lambda);
    t
}

/// Simulated data set of replication `r`.
pub fn replication_data(config: &RecoveryConfig, r: usize) -> Result<(u64, SsmData)> {
    let seed = config.seed.wrapping_add(r as u64);
    let sim = SimConfig {
        seed,
        n_matches: config.matches * 3 / 2 + 10,
        ..config.simulation.clone()
    };
    let season = simulate_season(&sim)?;
    // The simulated rules use the configured volumes, so the fitted
    // covariate must too.
    let mut panel = bettors_panel(&season.matches, Some(&season.truth.volumes()))?;
    if panel.matches.len() < config.matches {
        return Err(Error::Data(format!(
            "replication {r}: only {} matches retained, {} requested",
            panel.matches.len(),
            config.matches
        )));
    }
    panel.matches.truncate(config.matches);
    Ok((
        seed,
        SsmData::from_panel(&panel, &config.spec.covariates())?,
    ))
}

pub fn run_replication(config: &RecoveryConfig, r: usize) -> Result<Replication> {
    let (seed, data) = replication_data(config, r)?;
    let fit = fit_bettors(&data, config.spec, &config.fit)?;
    let truth = truth_values(config);
    let loglik_at_truth = if config.spec.has_state() {
        let rule = &config.simulation.bettors;
        let params = SsmParams {
            state: rule.state,
            beta: config
                .spec
                .covariates()
                .iter()
                .map(|&c| rule.coefficient(c))
                .collect(),
            gamma: rule.gamma,
            pi: if fit.parameter("pi").is_some_and(|p| p.fixed) {
                0.0
            } else {
                rule.pi
            },
            lambda: if fit.parameter("lambda").is_some_and(|p| p.fixed) {
                0.0
            } else {
                rule.lambda
            },
        };
        Some(ssm::total_loglik(&data, &params, &config.fit.grid)?)
    } else {
        None
    };
    let no_state_aic = if config.compare_no_state && config.spec.has_state() {
        let mut opts = config.fit.clone();
        opts.skip_covariance = true;
        Some(fit_beinf_glm(&data, &opts)?.aic)
    } else {
        None
    };
    Ok(Replication {
        replication: r,
        seed,
        n_matches: data.sequences.len(),
        n_obs: data.n_observed(),
        converged: fit.converged,
        loglik: fit.loglik,
        loglik_at_truth,
        aic: fit.aic,
        no_state_aic,
        rows: rows(r, &fit, &truth),
    })
}

fn rows(r: usize, fit: &FitResult, truth: &BTreeMap<String, f64>) -> Vec<RecoveryRow> {
    fit.parameters
        .iter()
        .filter(|p| !p.fixed)
        .filter_map(|p| {
            let t = *truth.get(&p.name)?;
            let covered = p
                .ci_lower
                .zip(p.ci_upper)
                .map(|(lo, hi)| lo <= t && t <= hi);
            Some(RecoveryRow {
                replication: r,
                parameter: p.name.clone(),
                truth: t,
                estimate: p.estimate,
                ci_lower: p.ci_lower,
                ci_upper: p.ci_upper,
                covered,
            })
        })
        .collect()
}

pub fn run_study(config: &RecoveryConfig) -> Result<Vec<Replication>> {
    (0..config.replications)
        .map(|r| run_replication(config, r))
        .collect()
}

/// Coverage and bias per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub parameter: String,
    pub truth: f64,
    pub replications: usize,
    pub mean_estimate: f64,
    pub coverage: Option<f64>,
}

pub fn coverage_summary(reps: &[Replication]) -> Vec<CoverageRow> {
    let mut by: BTreeMap<&str, Vec<&RecoveryRow>> = BTreeMap::new();
    for row in reps.iter().flat_map(|r| &r.rows) {
        by.entry(&row.parameter).or_default().push(row);
    }
    by.into_iter()
        .map(|(name, rows)| {
            let n = rows.len();
            let with_ci: Vec<bool> = rows.iter().filter_map(|r| r.covered).collect();
            CoverageRow {
                parameter: name.to_string(),
                truth: rows[0].truth,
                replications: n,
                mean_estimate: rows.iter().map(|r| r.estimate).sum::<f64>() / n as f64,
                coverage: (!with_ci.is_empty())
                    .then(|| with_ci.iter().filter(|c| **c).count() as f64 / with_ci.len() as f64),
            }
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(reps: &[Replication], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in reps.iter().flat_map(|r| &r.rows) {
        out.serialize(row)?;
    }
    out.flush()
        .map_err(|e| Error::Data(format!("writing recovery rows: {e}")))
}

pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()
        .map_err(|e| Error::Data(format!("writing coverage: {e}")))
}
