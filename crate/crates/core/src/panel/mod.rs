//! Tick ingestion, minute aggregation and the per-minute panel.
//!
//! Every series is reoriented to the team that scores the first goal: "team"
//! is the eventual first scorer and "opp" its opponent. Only the scoreless
//! period before that goal enters the panel.

mod io;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::odds::{implied_probs, OddsTriple};
use crate::{Error, Result};

pub use io::{
    read_match_files, read_meta_csv, read_panel_csv, read_ticks_csv, read_volumes_csv,
    write_meta_csv, write_panel_csv, write_ticks_csv, write_volumes_csv,
};
pub(crate) use io::{read_path, write_path};

/// Matches whose first goal falls before this minute are dropped.
pub const MIN_FIRST_GOAL_MINUTE: u32 = 6;

/// One 1 Hz snapshot of odds and cumulative-in-second stakes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub match_id: String,
    pub t_sec: u32,
    pub odds_home: f64,
    pub odds_draw: f64,
    pub odds_away: f64,
    pub stake_home: f64,
    pub stake_draw: f64,
    pub stake_away: f64,
    pub market_open: bool,
}

impl TickRecord {
    pub fn odds(&self) -> OddsTriple {
        OddsTriple::new(self.odds_home, self.odds_draw, self.odds_away)
    }

    /// Minute index `t` with the tick inside `[60(t−1), 60t)`.
    pub fn minute(&self) -> u32 {
        self.t_sec / 60 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Home => Side::Away,
            Side::Away => Side::Home,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedCardEvent {
    pub minute: u32,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XgEvent {
    pub minute: u32,
    pub side: Side,
    pub xg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMeta {
    pub match_id: String,
    pub home_team: String,
    pub away_team: String,
    pub prematch: OddsTriple,
    /// `T_i`; `None` for scoreless matches.
    pub first_goal_minute: Option<u32>,
    pub first_scorer: Option<Side>,
    pub red_cards: Vec<RedCardEvent>,
    pub xg_events: Vec<XgEvent>,
}

impl MatchMeta {
    pub fn validate(&self) -> Result<()> {
        let id = &self.match_id;
        match (self.first_goal_minute, self.first_scorer) {
            (Some(0), _) => {
                return Err(Error::Data(format!("{id}: first goal minute must be >= 1")))
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Data(format!(
                    "{id}: first goal minute and first scorer must both be present or both absent"
                )))
            }
            _ => {}
        }
        if self.red_cards.iter().any(|r| r.minute == 0) {
            return Err(Error::Data(format!("{id}: red card minute must be >= 1")));
        }
        for ev in &self.xg_events {
            if ev.minute == 0 || !(ev.xg >= 0.0) {
                return Err(Error::Data(format!(
                    "{id}: xG events need minute >= 1 and a non-negative value"
                )));
            }
        }
        Ok(())
    }

    pub fn first_scorer_is_home(&self) -> Option<bool> {
        self.first_scorer.map(|s| s == Side::Home)
    }

    fn scorer(&self) -> Result<(Side, u32)> {
        match (self.first_scorer, self.first_goal_minute) {
            (Some(side), Some(t)) => Ok((side, t)),
            _ => Err(Error::Data(format!(
                "{}: scoreless match has no first scorer to orient to",
                self.match_id
            ))),
        }
    }

    pub fn team_name(&self, side: Side) -> &str {
        match side {
            Side::Home => &self.home_team,
            Side::Away => &self.away_team,
        }
    }

    fn red_card_by(&self, side: Side, minute: u32) -> bool {
        self.red_cards
            .iter()
            .any(|r| r.side == side && r.minute <= minute)
    }

    fn cumulative_xg(&self, side: Side, minute: u32) -> f64 {
        self.xg_events
            .iter()
            .filter(|e| e.side == side && e.minute <= minute)
            .map(|e| e.xg)
            .sum()
    }
}

/// Ticks and metadata of one match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchData {
    pub meta: MatchMeta,
    pub ticks: Vec<TickRecord>,
}

/// One minute of ticks before reorientation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMinute {
    pub minute: u32,
    /// Last open-market odds at or before the end of the minute.
    pub odds: Option<OddsTriple>,
    pub stake_home: f64,
    pub stake_draw: f64,
    pub stake_away: f64,
    pub market_open: bool,
}

/// One aggregated minute from the first scorer's perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteObservation {
    pub match_id: String,
    pub t: u32,
    pub mintogoal: u32,
    /// In-match implied probability of the first scorer; `None` while no
    /// open-market odds have been seen.
    pub improb: Option<f64>,
    pub improb_opp: Option<f64>,
    pub improbpre: f64,
    pub redcardteam: bool,
    pub redcardopp: bool,
    pub xgdiff: f64,
    pub home: bool,
    pub volumediff: f64,
    /// Share of (non-draw) stakes on the first scorer; `None` when no money
    /// was placed on either team.
    pub stakerel: Option<f64>,
    pub market_open: bool,
}

/// Collapse a time-sorted tick stream into minutes. Stakes are summed, odds
/// are the last open-market tick (carried forward across closed minutes).
/// Minutes without any tick are not emitted.
pub fn aggregate_raw(ticks: &[TickRecord]) -> Result<Vec<RawMinute>> {
    let mut out: Vec<RawMinute> = Vec::new();
    let mut last_odds: Option<OddsTriple> = None;
    let mut prev_sec = 0u32;
    for (k, tick) in ticks.iter().enumerate() {
        if k > 0 {
            if tick.t_sec < prev_sec {
                return Err(Error::Data(format!(
                    "{}: ticks not sorted by time at t_sec = {}",
                    tick.match_id, tick.t_sec
                )));
            }
            if tick.match_id != ticks[0].match_id {
                return Err(Error::Data(format!(
                    "tick stream mixes matches {} and {}",
                    ticks[0].match_id, tick.match_id
                )));
            }
        }
        prev_sec = tick.t_sec;
        for s in [tick.stake_home, tick.stake_draw, tick.stake_away] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::Data(format!(
                    "{}: negative or non-finite stake at t_sec = {}",
                    tick.match_id, tick.t_sec
                )));
            }
        }
        if tick.market_open {
            let odds = tick.odds();
            implied_probs(&odds).map_err(|e| {
                Error::Data(format!("{}: t_sec = {}: {e}", tick.match_id, tick.t_sec))
            })?;
            last_odds = Some(odds);
        }

        let minute = tick.minute();
        if out.last().map(|m| m.minute) != Some(minute) {
            out.push(RawMinute {
                minute,
                odds: None,
                stake_home: 0.0,
                stake_draw: 0.0,
                stake_away: 0.0,
                market_open: false,
            });
        }
        let cur = out.last_mut().expect("pushed above");
        cur.stake_home += tick.stake_home;
        cur.stake_draw += tick.stake_draw;
        cur.stake_away += tick.stake_away;
        cur.market_open |= tick.market_open;
        cur.odds = last_odds;
    }
    Ok(out)
}

/// Map home/away-labelled values to (first scorer, opponent).
pub fn orient_to_scorer<T>(meta: &MatchMeta, home_values: T, away_values: T) -> Result<(T, T)> {
    let (side, _) = meta.scorer()?;
    Ok(match side {
        Side::Home => (home_values, away_values),
        Side::Away => (away_values, home_values),
    })
}

/// Aggregate one match's ticks into scorer-oriented minutes `t < T_i`.
/// `volumediff` is left at zero; see [`compute_volumediff`].
pub fn aggregate_minutes(ticks: &[TickRecord], meta: &MatchMeta) -> Result<Vec<MinuteObservation>> {
    meta.validate()?;
    let (scorer, goal_minute) = meta.scorer()?;
    let opp = scorer.other();
    let pre = implied_probs(&meta.prematch)
        .map_err(|e| Error::Data(format!("{}: prematch odds: {e}", meta.match_id)))?;
    let (improbpre, _) = orient_to_scorer(meta, pre.home, pre.away)?;

    let scoreless: Vec<TickRecord> = ticks
        .iter()
        .filter(|t| t.minute() < goal_minute)
        .cloned()
        .collect();
    let raw = aggregate_raw(&scoreless)?;

    let mut out = Vec::with_capacity(raw.len());
    for m in raw {
        let probs = m.odds.map(|o| implied_probs(&o)).transpose()?;
        let (improb, improb_opp) = match probs {
            Some(p) => {
                let (a, b) = orient_to_scorer(meta, p.home, p.away)?;
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let (stake_team, stake_opp) = orient_to_scorer(meta, m.stake_home, m.stake_away)?;
        let both = stake_team + stake_opp;
        let stakerel = (both > 0.0).then(|| stake_team / both);
        let t = m.minute;
        out.push(MinuteObservation {
            match_id: meta.match_id.clone(),
            t,
            mintogoal: goal_minute - t,
            improb,
            improb_opp,
            improbpre,
            redcardteam: meta.red_card_by(scorer, t),
            redcardopp: meta.red_card_by(opp, t),
            xgdiff: meta.cumulative_xg(scorer, t) - meta.cumulative_xg(opp, t),
            home: scorer == Side::Home,
            volumediff: 0.0,
            stakerel,
            market_open: m.market_open,
        });
    }
    Ok(out)
}

/// The scoreless period of one retained match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSeries {
    pub match_id: String,
    /// First scorer.
    pub team: String,
    pub opponent: String,
    pub first_goal_minute: u32,
    pub observations: Vec<MinuteObservation>,
    /// Number of removed (closed-market) minutes directly before each
    /// observation. All zero unless [`exclude_closed_market`] was applied.
    pub skipped_before: Vec<u32>,
}

impl MatchSeries {
    pub fn new(
        match_id: String,
        team: String,
        opponent: String,
        first_goal_minute: u32,
        observations: Vec<MinuteObservation>,
    ) -> Self {
        let skipped_before = vec![0; observations.len()];
        Self {
            match_id,
            team,
            opponent,
            first_goal_minute,
            observations,
            skipped_before,
        }
    }
}

/// Per-minute panel, matches sorted by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Panel {
    pub matches: Vec<MatchSeries>,
    /// Team → average stake per scoreless minute.
    pub volumes: BTreeMap<String, f64>,
}

impl Panel {
    pub fn from_matches(mut matches: Vec<MatchSeries>) -> Result<Self> {
        matches.sort_by(|a, b| a.match_id.cmp(&b.match_id));
        for w in matches.windows(2) {
            if w[0].match_id == w[1].match_id {
                return Err(Error::Data(format!("duplicate match id {}", w[0].match_id)));
            }
        }
        Ok(Self {
            matches,
            volumes: BTreeMap::new(),
        })
    }

    pub fn n_observations(&self) -> usize {
        self.matches.iter().map(|m| m.observations.len()).sum()
    }

    pub fn observations(&self) -> impl Iterator<Item = &MinuteObservation> {
        self.matches.iter().flat_map(|m| m.observations.iter())
    }

    pub fn get(&self, match_id: &str) -> Option<&MatchSeries> {
        self.matches
            .binary_search_by(|m| m.match_id.as_str().cmp(match_id))
            .ok()
            .map(|i| &self.matches[i])
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Counts produced by [`apply_sample_filters`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub matches_in: usize,
    pub scoreless: usize,
    pub early_goal: usize,
    pub matches_retained: usize,
    pub observations: usize,
    pub closed_market_minutes: usize,
    pub missing_odds_minutes: usize,
    pub missing_stakerel_minutes: usize,
}

/// Drop scoreless matches and matches with `T_i < 6`, aggregate the rest to
/// their scoreless minutes `1..T_i−1`.
pub fn apply_sample_filters(matches: &[MatchData]) -> Result<(Panel, FilterReport)> {
    let mut report = FilterReport {
        matches_in: matches.len(),
        ..Default::default()
    };
    let mut series = Vec::new();
    for m in matches {
        m.meta.validate()?;
        let Some(goal) = m.meta.first_goal_minute else {
            report.scoreless += 1;
            continue;
        };
        if goal < MIN_FIRST_GOAL_MINUTE {
            report.early_goal += 1;
            continue;
        }
        let obs = aggregate_minutes(&m.ticks, &m.meta)?;
        let (team, opponent) =
            orient_to_scorer(&m.meta, m.meta.home_team.clone(), m.meta.away_team.clone())?;
        series.push(MatchSeries::new(
            m.meta.match_id.clone(),
            team,
            opponent,
            goal,
            obs,
        ));
    }
    let panel = Panel::from_matches(series)?;
    report.matches_retained = panel.matches.len();
    report.observations = panel.n_observations();
    for o in panel.observations() {
        report.closed_market_minutes += usize::from(!o.market_open);
        report.missing_odds_minutes += usize::from(o.improb.is_none());
        report.missing_stakerel_minutes += usize::from(o.stakerel.is_none());
    }
    Ok((panel, report))
}

/// Average stake per minute on each team over the scoreless period of every
/// match (scoreless matches and early-goal matches included). Minutes with a
/// closed market do not count.
pub fn season_volumes(matches: &[MatchData]) -> Result<BTreeMap<String, f64>> {
    let mut totals: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for m in matches {
        let end = m.meta.first_goal_minute.unwrap_or(u32::MAX);
        let scoreless: Vec<TickRecord> = m
            .ticks
            .iter()
            .filter(|t| t.minute() < end)
            .cloned()
            .collect();
        let raw = aggregate_raw(&scoreless)?;
        for side in [Side::Home, Side::Away] {
            let entry = totals
                .entry(m.meta.team_name(side).to_string())
                .or_default();
            for minute in raw.iter().filter(|r| r.market_open) {
                entry.0 += match side {
                    Side::Home => minute.stake_home,
                    Side::Away => minute.stake_away,
                };
                entry.1 += 1;
            }
        }
    }
    Ok(totals
        .into_iter()
        .map(|(team, (sum, n))| (team, if n > 0 { sum / n as f64 } else { 0.0 }))
        .collect())
}

/// `volumediff = avg(team) − avg(opponent)`, constant within a match.
pub fn compute_volumediff(mut panel: Panel, volumes: &BTreeMap<String, f64>) -> Result<Panel> {
    for m in &mut panel.matches {
        let lookup = |team: &str| {
            volumes
                .get(team)
                .copied()
                .ok_or_else(|| Error::MissingTeam(team.to_string()))
        };
        let diff = lookup(&m.team)? - lookup(&m.opponent)?;
        for o in &mut m.observations {
            o.volumediff = diff;
        }
    }
    panel.volumes = volumes.clone();
    Ok(panel)
}

/// Remove closed-market minutes for the bettors' models. The number of
/// removed minutes in front of each remaining observation is recorded in
/// [`MatchSeries::skipped_before`]. Returns the panel and the count removed.
pub fn exclude_closed_market(panel: &Panel) -> (Panel, usize) {
    let mut removed = 0;
    let matches = panel
        .matches
        .iter()
        .map(|m| {
            let mut observations = Vec::with_capacity(m.observations.len());
            let mut skipped_before = Vec::with_capacity(m.observations.len());
            let mut pending = 0u32;
            for (o, &skip) in m.observations.iter().zip(&m.skipped_before) {
                if o.market_open {
                    observations.push(o.clone());
                    skipped_before.push(pending + skip);
                    pending = 0;
                } else {
                    pending += 1 + skip;
                    removed += 1;
                }
            }
            MatchSeries {
                observations,
                skipped_before,
                ..m.clone()
            }
        })
        .filter(|m| !m.observations.is_empty())
        .collect();
    (
        Panel {
            matches,
            volumes: panel.volumes.clone(),
        },
        removed,
    )
}

/// A regressor built from a [`MinuteObservation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Constant,
    ImprobPre,
    Minute,
    MinuteSquared,
    ImprobPreMinute,
    RedCardTeam,
    RedCardOpp,
    XgdiffPerMinute,
    Home,
    VolumeDiff,
    InvMintogoal,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::Constant => "constant",
            Covariate::ImprobPre => "improbpre",
            Covariate::Minute => "t",
            Covariate::MinuteSquared => "t^2",
            Covariate::ImprobPreMinute => "improbpre*t",
            Covariate::RedCardTeam => "redcardteam",
            Covariate::RedCardOpp => "redcardopp",
            Covariate::XgdiffPerMinute => "xgdiff/t",
            Covariate::Home => "home",
            Covariate::VolumeDiff => "volumediff",
            Covariate::InvMintogoal => "1/mintogoal",
        }
    }

    pub fn value(self, o: &MinuteObservation) -> f64 {
        let t = f64::from(o.t);
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            Covariate::Constant => 1.0,
            Covariate::ImprobPre => o.improbpre,
            Covariate::Minute => t,
            Covariate::MinuteSquared => t * t,
            Covariate::ImprobPreMinute => o.improbpre * t,
            Covariate::RedCardTeam => flag(o.redcardteam),
            Covariate::RedCardOpp => flag(o.redcardopp),
            Covariate::XgdiffPerMinute => o.xgdiff / t,
            Covariate::Home => flag(o.home),
            Covariate::VolumeDiff => o.volumediff,
            Covariate::InvMintogoal => 1.0 / f64::from(o.mintogoal),
        }
    }

    pub fn row(covariates: &[Covariate], o: &MinuteObservation) -> Vec<f64> {
        covariates.iter().map(|c| c.value(o)).collect()
    }
}

/// Distinct teams in a panel.
pub fn panel_teams(panel: &Panel) -> BTreeSet<String> {
    panel
        .matches
        .iter()
        .flat_map(|m| [m.team.clone(), m.opponent.clone()])
        .collect()
}

#[cfg(test)]
mod tests;
