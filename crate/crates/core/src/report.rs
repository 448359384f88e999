//! Descriptive tables, model comparison and plot-ready exports.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::estimate::FitResult;
use crate::linreg::RegressionFit;
use crate::panel::{MinuteObservation, Panel};
use crate::{Error, Result};

/// Panel variables reported in the summary and correlation tables.
pub const VARIABLES: [&str; 10] = [
    "t",
    "mintogoal",
    "improb",
    "improbpre",
    "redcardteam",
    "redcardopp",
    "xgdiff",
    "home",
    "volumediff",
    "stakerel",
];

fn variable(name: &str, o: &MinuteObservation) -> Option<f64> {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    match name {
        "t" => Some(f64::from(o.t)),
        "mintogoal" => Some(f64::from(o.mintogoal)),
        "improb" => o.improb,
        "improbpre" => Some(o.improbpre),
        "redcardteam" => Some(flag(o.redcardteam)),
        "redcardopp" => Some(flag(o.redcardopp)),
        "xgdiff" => Some(o.xgdiff),
        "home" => Some(flag(o.home)),
        "volumediff" => Some(o.volumediff),
        "stakerel" => o.stakerel,
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: String,
    /// Non-missing observations.
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`); `NaN` when `n < 2`.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

pub type SummaryTable = Vec<SummaryRow>;

fn describe(name: &str, mut values: Vec<f64>) -> SummaryRow {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = if n > 1 {
        (ss / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    values.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    SummaryRow {
        variable: name.to_string(),
        n,
        mean,
        sd,
        min: values[0],
        max: values[n - 1],
        median,
    }
}

/// Column statistics over all observations; missing cells are skipped.
pub fn summarize(panel: &Panel) -> Result<SummaryTable> {
    if panel.n_observations() == 0 {
        return Err(Error::Data("cannot summarize an empty panel".into()));
    }
    Ok(VARIABLES
        .iter()
        .filter_map(|name| {
            let values: Vec<f64> = panel
                .observations()
                .filter_map(|o| variable(name, o))
                .collect();
            (!values.is_empty()).then(|| describe(name, values))
        })
        .collect())
}

/// Pearson correlations over complete rows; `None` marks pairs involving a
/// zero-variance column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub n: usize,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlations(panel: &Panel) -> Result<CorrelationMatrix> {
    let rows: Vec<Vec<f64>> = panel
        .observations()
        .filter_map(|o| {
            VARIABLES
                .iter()
                .map(|v| variable(v, o))
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "correlations need at least 2 complete rows, got {}",
            rows.len()
        )));
    }
    let k = VARIABLES.len();
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut cross = vec![vec![0.0; k]; k];
    for r in &rows {
        for a in 0..k {
            let da = r[a] - means[a];
            for b in 0..=a {
                cross[a][b] += da * (r[b] - means[b]);
            }
        }
    }
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in 0..=a {
            let denom = (cross[a][a] * cross[b][b]).sqrt();
            let v = (denom > 0.0).then(|| {
                if a == b {
                    1.0
                } else {
                    (cross[a][b] / denom).clamp(-1.0, 1.0)
                }
            });
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    Ok(CorrelationMatrix {
        names: VARIABLES.iter().map(|s| s.to_string()).collect(),
        n: rows.len(),
        values,
    })
}

/// Information-criterion summary of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub n_obs: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
}

impl From<&FitResult> for ModelEntry {
    fn from(f: &FitResult) -> Self {
        Self {
            id: f.model.clone(),
            n_obs: f.n_obs,
            n_params: f.n_params,
            loglik: f.loglik,
            aic: f.aic,
        }
    }
}

impl From<&RegressionFit> for ModelEntry {
    fn from(f: &RegressionFit) -> Self {
        let suffix = if f.exclude_xg { "-noxg" } else { "" };
        Self {
            id: format!("model{}{suffix}", f.model_id),
            n_obs: f.n,
            n_params: f.k + 1,
            loglik: f.loglik,
            aic: f.aic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub n_obs: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    /// `AIC − min AIC`.
    pub delta_aic: f64,
}

/// Sorts by AIC (ties by id) and reports differences to the best model.
pub fn compare_models(entries: &[ModelEntry]) -> Result<Vec<ComparisonRow>> {
    let Some(first) = entries.first() else {
        return Err(Error::Data("no models to compare".into()));
    };
    if let Some(odd) = entries.iter().find(|e| e.n_obs != first.n_obs) {
        return Err(Error::Data(format!(
            "models fitted on different samples: {} has n = {}, {} has n = {}",
            first.id, first.n_obs, odd.id, odd.n_obs
        )));
    }
    let mut sorted: Vec<&ModelEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.aic.total_cmp(&b.aic).then_with(|| a.id.cmp(&b.id)));
    let best = sorted[0].aic;
    Ok(sorted
        .into_iter()
        .map(|e| ComparisonRow {
            id: e.id.clone(),
            n_obs: e.n_obs,
            n_params: e.n_params,
            loglik: e.loglik,
            aic: e.aic,
            delta_aic: e.aic - best,
        })
        .collect())
}

/// One minute of a match for plotting. Minutes without an observation
/// (the half-time break) are kept as flagged gap rows with empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: u32,
    pub improb_team: Option<f64>,
    pub improb_opp: Option<f64>,
    pub stakerel: Option<f64>,
    pub market_open: Option<bool>,
    pub gap: bool,
}

/// Rows for minutes `1..T_i−1` of one match.
pub fn export_match_series(panel: &Panel, match_id: &str) -> Result<Vec<SeriesRow>> {
    let series = panel
        .get(match_id)
        .ok_or_else(|| Error::Data(format!("match '{match_id}' is not in the panel")))?;
    Ok((1..series.first_goal_minute)
        .map(|t| match series.observations.iter().find(|o| o.t == t) {
            Some(o) => SeriesRow {
                t,
                improb_team: o.improb,
                improb_opp: o.improb_opp,
                stakerel: o.stakerel,
                market_open: Some(o.market_open),
                gap: false,
            },
            None => SeriesRow {
                t,
                improb_team: None,
                improb_opp: None,
                stakerel: None,
                market_open: None,
                gap: true,
            },
        })
        .collect())
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

pub fn summary_markdown(table: &SummaryTable) -> String {
    let mut s = String::from("| variable | n | mean | sd | min | max | median |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in table {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.variable,
            r.n,
            fmt_num(r.mean),
            fmt_num(r.sd),
            fmt_num(r.min),
            fmt_num(r.max),
            fmt_num(r.median)
        );
    }
    s
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("| model | n | parameters | loglik | AIC | dAIC |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} |",
            r.id, r.n_obs, r.n_params, r.loglik, r.aic, r.delta_aic
        );
    }
    s
}

pub fn write_correlations_csv<W: Write>(m: &CorrelationMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![String::from("variable")];
    header.extend(m.names.iter().cloned());
    out.write_record(&header)?;
    for (name, row) in m.names.iter().zip(&m.values) {
        let mut rec = vec![name.clone()];
        rec.extend(
            row.iter()
                .map(|v| v.map_or(String::new(), |x| format!("{x:.6}"))),
        );
        out.write_record(&rec)?;
    }
    out.flush()
        .map_err(|e| Error::Data(format!("writing correlations: {e}")))
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()
        .map_err(|e| Error::Data(format!("writing model comparison: {e}")))
}

pub fn write_series_csv<W: Write>(rows: &[SeriesRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "improb_team",
        "improb_opp",
        "stakerel",
        "market_open",
        "gap",
    ])?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        out.write_record([
            r.t.to_string(),
            cell(r.improb_team),
            cell(r.improb_opp),
            cell(r.stakerel),
            r.market_open
                .map_or(String::new(), |b| u8::from(b).to_string()),
            u8::from(r.gap).to_string(),
        ])?;
    }
    out.flush()
        .map_err(|e| Error::Data(format!("writing series: {e}")))
}

#[cfg(test)]
mod tests;
