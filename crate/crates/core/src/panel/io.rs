//! CSV schemas shared by real and simulated data.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    MatchData, MatchMeta, MatchSeries, MinuteObservation, Panel, RedCardEvent, Side, TickRecord,
    XgEvent,
};
use crate::odds::OddsTriple;
use crate::{Error, Result};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_ticks_csv<W: Write>(ticks: &[TickRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in ticks {
        wtr.serialize(t)?;
    }
    wtr.flush().map_err(|e| Error::io("<ticks>", e))?;
    Ok(())
}

/// Ticks grouped per match in file order.
pub fn read_ticks_csv<R: Read>(r: R) -> Result<BTreeMap<String, Vec<TickRecord>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: BTreeMap<String, Vec<TickRecord>> = BTreeMap::new();
    for rec in rdr.deserialize() {
        let t: TickRecord = rec?;
        out.entry(t.match_id.clone()).or_default().push(t);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRow {
    match_id: String,
    home_team: String,
    away_team: String,
    prematch_odds_home: f64,
    prematch_odds_draw: f64,
    prematch_odds_away: f64,
    first_goal_minute: Option<u32>,
    first_scorer_side: Option<Side>,
    event_type: Option<String>,
    event_minute: Option<u32>,
    event_side: Option<Side>,
    event_value: Option<f64>,
}

/// Long format: one row per red-card or xG event, match-level columns
/// repeated; a match without events has one row with empty event cells.
pub fn write_meta_csv<W: Write>(metas: &[MatchMeta], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in metas {
        let base = |event_type: Option<&str>, minute, side, value| MetaRow {
            match_id: m.match_id.clone(),
            home_team: m.home_team.clone(),
            away_team: m.away_team.clone(),
            prematch_odds_home: m.prematch.home,
            prematch_odds_draw: m.prematch.draw,
            prematch_odds_away: m.prematch.away,
            first_goal_minute: m.first_goal_minute,
            first_scorer_side: m.first_scorer,
            event_type: event_type.map(str::to_string),
            event_minute: minute,
            event_side: side,
            event_value: value,
        };
        if m.red_cards.is_empty() && m.xg_events.is_empty() {
            wtr.serialize(base(None, None, None, None))?;
        }
        for r in &m.red_cards {
            wtr.serialize(base(Some("red_card"), Some(r.minute), Some(r.side), None))?;
        }
        for x in &m.xg_events {
            wtr.serialize(base(Some("xg"), Some(x.minute), Some(x.side), Some(x.xg)))?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<meta>", e))?;
    Ok(())
}

pub fn read_meta_csv<R: Read>(r: R) -> Result<Vec<MatchMeta>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: BTreeMap<String, MatchMeta> = BTreeMap::new();
    for (line, rec) in rdr.deserialize().enumerate() {
        let row: MetaRow = rec?;
        let meta = MatchMeta {
            match_id: row.match_id.clone(),
            home_team: row.home_team.clone(),
            away_team: row.away_team.clone(),
            prematch: OddsTriple::new(
                row.prematch_odds_home,
                row.prematch_odds_draw,
                row.prematch_odds_away,
            ),
            first_goal_minute: row.first_goal_minute,
            first_scorer: row.first_scorer_side,
            red_cards: Vec::new(),
            xg_events: Vec::new(),
        };
        let entry = out
            .entry(row.match_id.clone())
            .or_insert_with(|| meta.clone());
        if entry.home_team != meta.home_team
            || entry.away_team != meta.away_team
            || entry.prematch != meta.prematch
            || entry.first_goal_minute != meta.first_goal_minute
            || entry.first_scorer != meta.first_scorer
        {
            return Err(Error::Data(format!(
                "meta row {}: match-level columns disagree for {}",
                line + 2,
                row.match_id
            )));
        }
        let missing =
            |what: &str| Error::Data(format!("meta row {}: event is missing {what}", line + 2));
        match row.event_type.as_deref() {
            None | Some("") => {}
            Some("red_card") => entry.red_cards.push(RedCardEvent {
                minute: row.event_minute.ok_or_else(|| missing("event_minute"))?,
                side: row.event_side.ok_or_else(|| missing("event_side"))?,
            }),
            Some("xg") => entry.xg_events.push(XgEvent {
                minute: row.event_minute.ok_or_else(|| missing("event_minute"))?,
                side: row.event_side.ok_or_else(|| missing("event_side"))?,
                xg: row.event_value.ok_or_else(|| missing("event_value"))?,
            }),
            Some(other) => {
                return Err(Error::Data(format!(
                    "meta row {}: unknown event type `{other}`",
                    line + 2
                )))
            }
        }
    }
    let metas: Vec<MatchMeta> = out.into_values().collect();
    for m in &metas {
        m.validate()?;
    }
    Ok(metas)
}

/// Column names follow the covariate names of the summary table, plus
/// identifiers and the opponent's implied probability.
#[derive(Debug, Serialize, Deserialize)]
struct PanelRow {
    match_id: String,
    team: String,
    opponent: String,
    t: u32,
    mintogoal: u32,
    improb: Option<f64>,
    improbopp: Option<f64>,
    improbpre: f64,
    redcardteam: u8,
    redcardopp: u8,
    xgdiff: f64,
    home: u8,
    volumediff: f64,
    stakerel: Option<f64>,
    market_open: u8,
}

pub fn write_panel_csv<W: Write>(panel: &Panel, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in &panel.matches {
        for o in &m.observations {
            wtr.serialize(PanelRow {
                match_id: o.match_id.clone(),
                team: m.team.clone(),
                opponent: m.opponent.clone(),
                t: o.t,
                mintogoal: o.mintogoal,
                improb: o.improb,
                improbopp: o.improb_opp,
                improbpre: o.improbpre,
                redcardteam: o.redcardteam.into(),
                redcardopp: o.redcardopp.into(),
                xgdiff: o.xgdiff,
                home: o.home.into(),
                volumediff: o.volumediff,
                stakerel: o.stakerel,
                market_open: o.market_open.into(),
            })?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<panel>", e))?;
    Ok(())
}

pub fn read_panel_csv<R: Read>(r: R) -> Result<Panel> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut groups: BTreeMap<String, (String, String, Vec<MinuteObservation>)> = BTreeMap::new();
    for rec in rdr.deserialize() {
        let row: PanelRow = rec?;
        if row.mintogoal == 0 {
            return Err(Error::Data(format!(
                "{}: mintogoal must be >= 1",
                row.match_id
            )));
        }
        let entry = groups
            .entry(row.match_id.clone())
            .or_insert_with(|| (row.team.clone(), row.opponent.clone(), Vec::new()));
        entry.2.push(MinuteObservation {
            match_id: row.match_id,
            t: row.t,
            mintogoal: row.mintogoal,
            improb: row.improb,
            improb_opp: row.improbopp,
            improbpre: row.improbpre,
            redcardteam: row.redcardteam != 0,
            redcardopp: row.redcardopp != 0,
            xgdiff: row.xgdiff,
            home: row.home != 0,
            volumediff: row.volumediff,
            stakerel: row.stakerel,
            market_open: row.market_open != 0,
        });
    }
    let mut matches = Vec::with_capacity(groups.len());
    for (id, (team, opponent, obs)) in groups {
        if obs.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Data(format!(
                "{id}: minutes not strictly increasing"
            )));
        }
        let goal = obs[0].t + obs[0].mintogoal;
        matches.push(MatchSeries::new(id, team, opponent, goal, obs));
    }
    Panel::from_matches(matches)
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumeRow {
    team: String,
    avg_stake_per_minute: f64,
}

pub fn write_volumes_csv<W: Write>(volumes: &BTreeMap<String, f64>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (team, v) in volumes {
        wtr.serialize(VolumeRow {
            team: team.clone(),
            avg_stake_per_minute: *v,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<volumes>", e))?;
    Ok(())
}

pub fn read_volumes_csv<R: Read>(r: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize() {
        let row: VolumeRow = rec?;
        out.insert(row.team, row.avg_stake_per_minute);
    }
    Ok(out)
}

pub(crate) fn read_path<T>(path: &Path, f: impl FnOnce(File) -> Result<T>) -> Result<T> {
    f(open(path)?)
}

pub(crate) fn write_path(path: &Path, f: impl FnOnce(&mut File) -> Result<()>) -> Result<()> {
    let mut file = create(path)?;
    f(&mut file)?;
    file.flush().map_err(|e| Error::io(path, e))
}

/// Reads `ticks.csv` and `meta.csv` from `dir` and pairs them by match id.
/// Every tick must belong to a match listed in the metadata.
pub fn read_match_files(dir: &Path) -> Result<Vec<MatchData>> {
    let mut ticks = read_path(&dir.join("ticks.csv"), read_ticks_csv)?;
    let metas = read_path(&dir.join("meta.csv"), read_meta_csv)?;
    let matches: Vec<MatchData> = metas
        .into_iter()
        .map(|meta| {
            let ticks = ticks.remove(&meta.match_id).unwrap_or_default();
            MatchData { meta, ticks }
        })
        .collect();
    if let Some(id) = ticks.keys().next() {
        return Err(Error::Data(format!(
            "ticks for match {id} have no metadata row"
        )));
    }
    Ok(matches)
}
