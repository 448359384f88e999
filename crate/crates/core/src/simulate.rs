//! Synthetic seasons of tick-level match data.
//!
//! Each match draws team strengths into pre-match probabilities, a
//! first-goal minute from a per-minute hazard, red cards and an xG shot
//! process. In-play odds follow the linear bookmaker rule (plus match-level
//! and AR(1) noise) and relative stakes follow the state-space model, so the
//! generated files double as ground truth for recovery studies.
//!
//! Clock: minute `t` covers seconds `[60(t−1), 60t)` since kick-off. The first
//! half runs `45 + U{1..3}` minutes, the break has no ticks, the second half
//! runs `45 + U{2..5}` minutes. Ticks stop after the first-goal minute.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::beinf::{self, BeinfParams};
use crate::odds::{OddsTriple, ProbTriple};
use crate::panel::{
    Covariate, MatchData, MatchMeta, MinuteObservation, RedCardEvent, Side, TickRecord, XgEvent,
};
use crate::ssm::StateParams;
use crate::{Error, Result};

/// Average stakes per minute of the default 18-team league.
pub const DEFAULT_VOLUMES: [f64; 18] = [
    55.70, 36.80, 34.68, 32.99, 27.55, 25.51, 25.50, 23.20, 20.88, 17.26, 16.51, 12.57, 11.23,
    10.25, 9.84, 9.05, 8.98, 8.93,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamConfig {
    pub name: String,
    /// Average stake per minute on the team.
    pub volume: f64,
}

/// One linear-predictor term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub covariate: Covariate,
    pub coefficient: f64,
}

fn terms(list: &[(Covariate, f64)]) -> Vec<Term> {
    list.iter()
        .map(|&(covariate, coefficient)| Term {
            covariate,
            coefficient,
        })
        .collect()
}

fn predictor(terms: &[Term], o: &MinuteObservation, scoreless: bool) -> f64 {
    terms
        .iter()
        .filter(|t| !(scoreless && t.covariate == Covariate::InvMintogoal))
        .map(|t| t.coefficient * t.covariate.value(o))
        .sum()
}

/// Ordered-probit pre-match probabilities from team ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrengthConfig {
    pub rating_sd: f64,
    /// Correlation between rating and standardised log volume.
    pub volume_loading: f64,
    pub home_advantage: f64,
    pub draw_cut: f64,
}

impl Default for StrengthConfig {
    fn default() -> Self {
        Self {
            rating_sd: 0.5,
            volume_loading: 0.6,
            home_advantage: 0.25,
            draw_cut: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// Per-team goal probability per playing minute at equal strength.
    pub goal_hazard: f64,
    /// Log-hazard change per unit of (own − opponent) strength.
    pub goal_strength_effect: f64,
    /// Hazard multiplier for a team whose opponent is a player down.
    pub goal_red_card_factor: f64,
    pub red_card_hazard: f64,
    /// Shot probability per team and playing minute.
    pub shot_rate: f64,
    pub mean_shot_xg: f64,
    /// Probability that the market is suspended in a playing minute.
    pub closure_rate: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            goal_hazard: 0.0135,
            goal_strength_effect: 0.5,
            goal_red_card_factor: 1.5,
            red_card_hazard: 0.001,
            shot_rate: 0.12,
            mean_shot_xg: 0.1,
            closure_rate: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub half_minutes: u32,
    pub first_stoppage: (u32, u32),
    pub break_minutes: u32,
    pub second_stoppage: (u32, u32),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            half_minutes: 45,
            first_stoppage: (1, 3),
            break_minutes: 15,
            second_stoppage: (2, 5),
        }
    }
}

/// Linear rule for the first scorer's in-play implied probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BookmakerRule {
    pub terms: Vec<Term>,
    /// Coefficient on `1/mintogoal`; zero means no anticipation.
    pub anticipation: f64,
    pub match_effect_sd: f64,
    pub noise_sd: f64,
    pub noise_ar: f64,
    /// Bounds applied to the scorer's probability before pricing.
    pub min_prob: f64,
    pub max_prob: f64,
}

impl Default for BookmakerRule {
    fn default() -> Self {
        use Covariate::*;
        Self {
            terms: terms(&[
                (Constant, -0.004),
                (ImprobPre, 1.003),
                (Minute, 0.001),
                (MinuteSquared, -0.000013),
                (ImprobPreMinute, -0.004),
                (RedCardTeam, -0.120),
                (RedCardOpp, 0.173),
                (XgdiffPerMinute, 0.163),
            ]),
            anticipation: 0.0,
            match_effect_sd: 0.02,
            noise_sd: 0.02,
            noise_ar: 0.5,
            min_prob: 0.001,
            max_prob: 0.9,
        }
    }
}

/// State-space rule for the first scorer's relative stakes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BettorsRule {
    pub terms: Vec<Term>,
    pub state: StateParams,
    pub gamma: f64,
    pub pi: f64,
    pub lambda: f64,
}

impl Default for BettorsRule {
    fn default() -> Self {
        use Covariate::*;
        Self {
            terms: terms(&[
                (Constant, -0.762),
                (ImprobPre, 1.753),
                (Minute, 0.000),
                (RedCardTeam, -0.767),
                (RedCardOpp, 0.681),
                (Home, -0.005),
                (VolumeDiff, 0.047),
                (XgdiffPerMinute, 3.627),
                (InvMintogoal, 0.096),
            ]),
            state: StateParams {
                phi: 0.974,
                sigma_s: 0.183,
            },
            gamma: 16.065,
            pi: 0.00096,
            lambda: 0.00053,
        }
    }
}

impl BettorsRule {
    /// The basic specification's coefficients with its state parameters.
    pub fn basic() -> Self {
        use Covariate::*;
        Self {
            terms: terms(&[
                (Constant, -1.785),
                (ImprobPre, 4.520),
                (Minute, 0.002),
                (MinuteSquared, 0.00001),
                (ImprobPreMinute, -0.004),
                (RedCardTeam, -0.630),
                (RedCardOpp, 0.661),
                (XgdiffPerMinute, 3.497),
                (InvMintogoal, 0.089),
            ]),
            state: StateParams {
                phi: 0.984,
                sigma_s: 0.176,
            },
            ..Self::default()
        }
    }

    pub fn coefficient(&self, c: Covariate) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.covariate == c)
            .map(|t| t.coefficient)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StakeConfig {
    /// Draw stakes as a share of all stakes.
    pub draw_share: f64,
    /// Log-scale SD of the per-minute total stake.
    pub volume_noise_sd: f64,
}

impl Default for StakeConfig {
    fn default() -> Self {
        Self {
            draw_share: 0.13,
            volume_noise_sd: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_matches: usize,
    pub seed: u64,
    pub teams: Vec<TeamConfig>,
    pub strength: StrengthConfig,
    pub events: EventConfig,
    pub schedule: ScheduleConfig,
    pub bookmaker: BookmakerRule,
    pub bettors: BettorsRule,
    pub stakes: StakeConfig,
    pub margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_matches: 306,
            seed: 1,
            teams: DEFAULT_VOLUMES
                .iter()
                .enumerate()
                .map(|(i, &volume)| TeamConfig {
                    name: format!("team{:02}", i + 1),
                    volume,
                })
                .collect(),
            strength: StrengthConfig::default(),
            events: EventConfig::default(),
            schedule: ScheduleConfig::default(),
            bookmaker: BookmakerRule::default(),
            bettors: BettorsRule::default(),
            stakes: StakeConfig::default(),
            margin: 0.05,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.teams.len() < 2 {
            return bad("at least two teams are required".into());
        }
        if self.teams.iter().any(|t| !(t.volume > 0.0)) {
            return bad("team volumes must be positive".into());
        }
        let e = &self.events;
        for (name, v) in [
            ("goal_hazard", e.goal_hazard),
            ("red_card_hazard", e.red_card_hazard),
            ("shot_rate", e.shot_rate),
            ("closure_rate", e.closure_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be a probability, got {v}"));
            }
        }
        if !(e.mean_shot_xg > 0.0 && e.goal_red_card_factor > 0.0) {
            return bad("mean_shot_xg and goal_red_card_factor must be positive".into());
        }
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        let b = &self.bookmaker;
        if !(b.min_prob > 0.0 && b.min_prob < b.max_prob && b.max_prob < 1.0) {
            return bad("bookmaker probability bounds must satisfy 0 < min < max < 1".into());
        }
        if !(b.noise_sd >= 0.0 && b.match_effect_sd >= 0.0 && b.noise_ar.abs() < 1.0) {
            return bad("bookmaker noise must have sd >= 0 and |ar| < 1".into());
        }
        let s = &self.schedule;
        if s.first_stoppage.0 > s.first_stoppage.1 || s.second_stoppage.0 > s.second_stoppage.1 {
            return bad("stoppage ranges must be ordered".into());
        }
        if !(0.0..1.0).contains(&self.stakes.draw_share) || !(self.stakes.volume_noise_sd >= 0.0) {
            return bad("draw_share must lie in [0,1) and volume_noise_sd >= 0".into());
        }
        let r = &self.bettors;
        r.state.validate()?;
        crate::ssm::validate_emission(r.gamma, r.pi, r.lambda, &[])?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamTruth {
    pub name: String,
    pub volume: f64,
    pub rating: f64,
}

/// Latent and generated values of one emitted minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteTruth {
    pub t: u32,
    pub market_open: bool,
    /// Priced probabilities (home, draw, away) before the margin.
    pub probs: ProbTriple,
    /// Bookmaker predictor for the perspective team, before bounding.
    pub bookmaker_predictor: f64,
    pub state: f64,
    pub eta: f64,
    pub stakerel: Option<f64>,
    pub stake_home: f64,
    pub stake_draw: f64,
    pub stake_away: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTruth {
    pub meta: MatchMeta,
    pub prematch: ProbTriple,
    /// Side whose perspective the rules use: the first scorer, or home for
    /// scoreless matches.
    pub perspective: Side,
    pub first_half_end: u32,
    pub second_half_start: u32,
    pub end: u32,
    pub match_effect: f64,
    pub minutes: Vec<MinuteTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonTruth {
    pub config: SimConfig,
    pub teams: Vec<TeamTruth>,
    pub matches: Vec<MatchTruth>,
}

impl SeasonTruth {
    /// Configured team volumes, the values the simulated rules use for
    /// `volumediff`.
    pub fn volumes(&self) -> BTreeMap<String, f64> {
        self.teams
            .iter()
            .map(|t| (t.name.clone(), t.volume))
            .collect()
    }
}

/// Ticks and metadata plus the truth record.
#[derive(Debug, Clone)]
pub struct Season {
    pub matches: Vec<MatchData>,
    pub truth: SeasonTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn draw_teams(config: &SimConfig) -> Vec<TeamTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let logs: Vec<f64> = config.teams.iter().map(|t| t.volume.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    let rho = config.strength.volume_loading.clamp(-1.0, 1.0);
    config
        .teams
        .iter()
        .zip(&logs)
        .map(|(t, l)| {
            let z = if sd > 0.0 { (l - mean) / sd } else { 0.0 };
            let u = normal(&mut rng);
            TeamTruth {
                name: t.name.clone(),
                volume: t.volume,
                rating: config.strength.rating_sd * (rho * z + (1.0 - rho * rho).sqrt() * u),
            }
        })
        .collect()
}

/// Pairing of match `i`: a double round robin, repeated as needed.
fn pairing(i: usize, n_teams: usize) -> (usize, usize) {
    let per_cycle = n_teams * (n_teams - 1);
    let k = i % per_cycle;
    let home = k / (n_teams - 1);
    let mut away = k % (n_teams - 1);
    if away >= home {
        away += 1;
    }
    (home, away)
}

/// Win probabilities are capped at `max_prob`, the excess going to the draw.
fn prematch_probs(strength: &StrengthConfig, home: f64, away: f64, max_prob: f64) -> ProbTriple {
    let n = Normal::standard();
    let d = home - away + strength.home_advantage;
    let ph = n.cdf(d - strength.draw_cut).min(max_prob);
    let pa = n.cdf(-d - strength.draw_cut).min(max_prob);
    ProbTriple {
        home: ph,
        draw: 1.0 - ph - pa,
        away: pa,
    }
}

/// Per-minute events of one match, independent of the market.
struct Events {
    goal: Option<(u32, Side)>,
    red_cards: Vec<RedCardEvent>,
    xg: Vec<XgEvent>,
    closed: Vec<u32>,
    first_half_end: u32,
    second_half_start: u32,
    end: u32,
}

fn draw_events(config: &SimConfig, rating_diff: f64, rng: &mut ChaCha8Rng) -> Events {
    let s = &config.schedule;
    let e = &config.events;
    let first_half_end = s.half_minutes + rng.random_range(s.first_stoppage.0..=s.first_stoppage.1);
    let second_half_start = first_half_end + s.break_minutes + 1;
    let end = second_half_start - 1
        + s.half_minutes
        + rng.random_range(s.second_stoppage.0..=s.second_stoppage.1);
    let exp = Exp::new(1.0 / e.mean_shot_xg).expect("validated");
    let mut red: Vec<RedCardEvent> = Vec::new();
    let mut xg = Vec::new();
    let mut closed = Vec::new();
    let mut goal = None;
    let minutes = (1..=first_half_end).chain(second_half_start..=end);
    for t in minutes {
        for side in [Side::Home, Side::Away] {
            if rng.random::<f64>() < e.shot_rate {
                xg.push(XgEvent {
                    minute: t,
                    side,
                    xg: exp.sample(rng).min(0.99),
                });
            }
        }
        let mut carded_this_minute = false;
        for side in [Side::Home, Side::Away] {
            if rng.random::<f64>() < e.red_card_hazard {
                red.push(RedCardEvent { minute: t, side });
                carded_this_minute = true;
            }
        }
        let down = |side: Side| red.iter().any(|r| r.side == side && r.minute < t);
        let hazard = |side: Side| {
            let sign = if side == Side::Home { 0.5 } else { -0.5 };
            let mut h = e.goal_hazard * (e.goal_strength_effect * sign * rating_diff).exp();
            if down(side.other()) {
                h *= e.goal_red_card_factor;
            }
            if down(side) {
                h /= e.goal_red_card_factor;
            }
            h.min(1.0)
        };
        let (hh, ha) = (hazard(Side::Home), hazard(Side::Away));
        let u: f64 = rng.random();
        let scored = if u < hh {
            Some(Side::Home)
        } else if u < hh + ha * (1.0 - hh) {
            Some(Side::Away)
        } else {
            None
        };
        if carded_this_minute || rng.random::<f64>() < e.closure_rate {
            closed.push(t);
        }
        if let Some(side) = scored {
            goal = Some((t, side));
            break;
        }
    }
    Events {
        goal,
        red_cards: red,
        xg,
        closed,
        first_half_end,
        second_half_start,
        end,
    }
}

/// Simulates the latent minute-level record of one match.
fn simulate_match(config: &SimConfig, teams: &[TeamTruth], index: usize) -> Result<MatchTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);
    let (hi, ai) = pairing(index, teams.len());
    let (home, away) = (&teams[hi], &teams[ai]);
    let prematch = prematch_probs(
        &config.strength,
        home.rating,
        away.rating,
        config.bookmaker.max_prob,
    );
    let rating_diff = home.rating - away.rating + config.strength.home_advantage;
    let ev = draw_events(config, rating_diff, &mut rng);

    let match_id = format!("m{:04}", index + 1);
    let meta = MatchMeta {
        match_id: match_id.clone(),
        home_team: home.name.clone(),
        away_team: away.name.clone(),
        prematch: OddsTriple::from_probs(prematch, config.margin)?,
        first_goal_minute: ev.goal.map(|g| g.0),
        first_scorer: ev.goal.map(|g| g.1),
        red_cards: ev.red_cards.clone(),
        xg_events: ev.xg.clone(),
    };
    let perspective = ev.goal.map_or(Side::Home, |g| g.1);
    let opp = perspective.other();
    let scoreless = ev.goal.is_none();
    let (pre_team, pre_opp) = match perspective {
        Side::Home => (prematch.home, prematch.away),
        Side::Away => (prematch.away, prematch.home),
    };
    // Opponent's share of the non-team probability drifts towards the draw.
    let opp_share0 = pre_opp / (pre_opp + prematch.draw);
    let (vol_team, vol_opp) = match perspective {
        Side::Home => (home.volume, away.volume),
        Side::Away => (away.volume, home.volume),
    };

    let book = &config.bookmaker;
    let bet = &config.bettors;
    let match_effect = book.match_effect_sd * normal(&mut rng);
    let mut noise = book.noise_sd / (1.0 - book.noise_ar * book.noise_ar).sqrt() * normal(&mut rng);
    let mut state = bet.state.stationary_sd() * normal(&mut rng);
    let stake_noise = LogNormal::new(0.0, config.stakes.volume_noise_sd)
        .map_err(|e| Error::Config(format!("stake noise: {e}")))?;

    let last = ev.goal.map_or(ev.end, |g| g.0);
    let minutes: Vec<u32> = (1..=ev.first_half_end.min(last))
        .chain(ev.second_half_start..=last)
        .collect();
    let mut out = Vec::with_capacity(minutes.len());
    for (k, &t) in minutes.iter().enumerate() {
        if k > 0 {
            noise = book.noise_ar * noise + book.noise_sd * normal(&mut rng);
            state = bet.state.phi * state + bet.state.sigma_s * normal(&mut rng);
        }
        let goal_minute = ev.goal.is_some_and(|g| g.0 == t);
        let card = |side: Side| ev.red_cards.iter().any(|r| r.side == side && r.minute <= t);
        let cum = |side: Side| -> f64 {
            ev.xg
                .iter()
                .filter(|x| x.side == side && x.minute <= t)
                .map(|x| x.xg)
                .sum()
        };
        let obs = MinuteObservation {
            match_id: match_id.clone(),
            t,
            mintogoal: ev.goal.map_or(u32::MAX, |g| g.0.saturating_sub(t).max(1)),
            improb: None,
            improb_opp: None,
            improbpre: pre_team,
            redcardteam: card(perspective),
            redcardopp: card(opp),
            xgdiff: cum(perspective) - cum(opp),
            home: perspective == Side::Home,
            volumediff: vol_team - vol_opp,
            stakerel: None,
            market_open: true,
        };
        let mut linear = predictor(&book.terms, &obs, scoreless) + match_effect + noise;
        if !scoreless {
            linear += book.anticipation * Covariate::InvMintogoal.value(&obs);
        }
        let p_team = linear.clamp(book.min_prob, book.max_prob);
        let drift = (1.0 - 0.5 * f64::from(t) / 95.0).max(0.2);
        let p_draw = ((1.0 - p_team) * (1.0 - opp_share0 * drift)).min(book.max_prob);
        let p_opp = 1.0 - p_team - p_draw;
        let probs = match perspective {
            Side::Home => ProbTriple {
                home: p_team,
                draw: p_draw,
                away: p_opp,
            },
            Side::Away => ProbTriple {
                home: p_opp,
                draw: p_draw,
                away: p_team,
            },
        };
        let market_open = !goal_minute && !ev.closed.contains(&t);
        let eta = predictor(&bet.terms, &obs, scoreless) + state;
        let (stakerel, stake_team, stake_opp, stake_draw) = if market_open {
            let mu = beinf::mean_from_predictor(eta);
            let y = beinf::sample(
                &BeinfParams::new(mu, bet.gamma, bet.pi, bet.lambda)?,
                &mut rng,
            )?;
            let total = (vol_team + vol_opp) * stake_noise.sample(&mut rng);
            let d = config.stakes.draw_share;
            (Some(y), total * y, total * (1.0 - y), total * d / (1.0 - d))
        } else {
            (None, 0.0, 0.0, 0.0)
        };
        let (stake_home, stake_away) = match perspective {
            Side::Home => (stake_team, stake_opp),
            Side::Away => (stake_opp, stake_team),
        };
        out.push(MinuteTruth {
            t,
            market_open,
            probs,
            bookmaker_predictor: linear,
            state,
            eta,
            stakerel,
            stake_home,
            stake_draw,
            stake_away,
        });
    }
    Ok(MatchTruth {
        meta,
        prematch,
        perspective,
        first_half_end: ev.first_half_end,
        second_half_start: ev.second_half_start,
        end: ev.end,
        match_effect,
        minutes: out,
    })
}

/// Minute-level truth for every match, without tick expansion.
pub fn simulate_minutes(config: &SimConfig) -> Result<SeasonTruth> {
    config.validate()?;
    let teams = draw_teams(config);
    let matches = (0..config.n_matches)
        .map(|i| simulate_match(config, &teams, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeasonTruth {
        config: config.clone(),
        teams,
        matches,
    })
}

/// 1 Hz ticks of one simulated match; minute stakes are spread evenly over
/// its seconds.
pub fn expand_ticks(m: &MatchTruth, margin: f64) -> Result<Vec<TickRecord>> {
    let mut ticks = Vec::with_capacity(m.minutes.len() * 60);
    for minute in &m.minutes {
        let odds = OddsTriple::from_probs(minute.probs, margin)
            .map_err(|e| Error::Config(format!("{} minute {}: {e}", m.meta.match_id, minute.t)))?;
        for s in 0..60 {
            ticks.push(TickRecord {
                match_id: m.meta.match_id.clone(),
                t_sec: 60 * (minute.t - 1) + s,
                odds_home: odds.home,
                odds_draw: odds.draw,
                odds_away: odds.away,
                stake_home: minute.stake_home / 60.0,
                stake_draw: minute.stake_draw / 60.0,
                stake_away: minute.stake_away / 60.0,
                market_open: minute.market_open,
            });
        }
    }
    Ok(ticks)
}

pub fn simulate_season(config: &SimConfig) -> Result<Season> {
    let truth = simulate_minutes(config)?;
    let matches = truth
        .matches
        .iter()
        .map(|m| {
            Ok(MatchData {
                meta: m.meta.clone(),
                ticks: expand_ticks(m, config.margin)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Season { matches, truth })
}

/// Writes `ticks.csv`, `meta.csv`, the configured team volumes
/// (`volumes.csv`) and `truth.json` into `dir`.
pub fn write_season(dir: &Path, season: &Season) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_match_files(dir, &season.matches)?;
    let volumes = season.truth.volumes();
    crate::panel::write_path(&dir.join("volumes.csv"), |f| {
        crate::panel::write_volumes_csv(&volumes, f)
    })?;
    let path = dir.join("truth.json");
    crate::panel::write_path(&path, |f| Ok(serde_json::to_writer(f, &season.truth)?))
}

/// Writes `ticks.csv` and `meta.csv` into `dir`.
pub fn write_match_files(dir: &Path, matches: &[MatchData]) -> Result<()> {
    let ticks: Vec<TickRecord> = matches
        .iter()
        .flat_map(|m| m.ticks.iter().cloned())
        .collect();
    let metas: Vec<MatchMeta> = matches.iter().map(|m| m.meta.clone()).collect();
    let tp = dir.join("ticks.csv");
    crate::panel::write_path(&tp, |f| crate::panel::write_ticks_csv(&ticks, f))?;
    let mp = dir.join("meta.csv");
    crate::panel::write_path(&mp, |f| crate::panel::write_meta_csv(&metas, f))
}

pub const FIXTURES: [&str; 3] = ["two_team_equal", "dortmund_like", "redcard_min12"];

/// Small hand-checkable datasets.
pub fn make_fixture(name: &str) -> Result<Vec<MatchData>> {
    match name {
        "two_team_equal" => (1..=3)
            .map(|i| {
                let probs = ProbTriple {
                    home: 0.4,
                    draw: 0.3,
                    away: 0.3,
                };
                fixture_match(
                    &format!("eq{i}"),
                    "alpha",
                    "beta",
                    probs,
                    11,
                    Side::Home,
                    vec![],
                    |_| 0.5,
                )
            })
            .collect(),
        "dortmund_like" => {
            let probs = ProbTriple {
                home: 0.747,
                draw: 0.158,
                away: 0.095,
            };
            Ok(vec![fixture_match(
                "dortmund_like",
                "dortmund",
                "stuttgart",
                probs,
                11,
                Side::Home,
                vec![],
                |t| 0.6 + 0.01 * f64::from(t),
            )?])
        }
        "redcard_min12" => {
            let probs = ProbTriple {
                home: 0.45,
                draw: 0.28,
                away: 0.27,
            };
            let cards = vec![RedCardEvent {
                minute: 12,
                side: Side::Away,
            }];
            Ok(vec![fixture_match(
                "redcard_min12",
                "gamma",
                "delta",
                probs,
                20,
                Side::Home,
                cards,
                |t| {
                    if t < 12 {
                        0.5
                    } else {
                        0.7
                    }
                },
            )?])
        }
        other => Err(Error::Config(format!(
            "unknown fixture '{other}' (known: {})",
            FIXTURES.join(", ")
        ))),
    }
}

/// A match with constant odds, 100 units per minute on the two teams, and
/// the scorer's share given by `share(t)`.
#[allow(clippy::too_many_arguments)]
fn fixture_match(
    id: &str,
    home: &str,
    away: &str,
    probs: ProbTriple,
    goal: u32,
    scorer: Side,
    red_cards: Vec<RedCardEvent>,
    share: impl Fn(u32) -> f64,
) -> Result<MatchData> {
    let odds = OddsTriple::from_probs(probs, 0.05)?;
    let mut ticks = Vec::new();
    for t in 1..=goal {
        let y = share(t);
        let (h, a) = match scorer {
            Side::Home => (100.0 * y, 100.0 * (1.0 - y)),
            Side::Away => (100.0 * (1.0 - y), 100.0 * y),
        };
        let open = t != goal && !red_cards.iter().any(|r| r.minute == t);
        for s in 0..60 {
            ticks.push(TickRecord {
                match_id: id.to_string(),
                t_sec: 60 * (t - 1) + s,
                odds_home: odds.home,
                odds_draw: odds.draw,
                odds_away: odds.away,
                stake_home: if open { h / 60.0 } else { 0.0 },
                stake_draw: if open { 0.25 } else { 0.0 },
                stake_away: if open { a / 60.0 } else { 0.0 },
                market_open: open,
            });
        }
    }
    Ok(MatchData {
        meta: MatchMeta {
            match_id: id.to_string(),
            home_team: home.to_string(),
            away_team: away.to_string(),
            prematch: odds,
            first_goal_minute: Some(goal),
            first_scorer: Some(scorer),
            red_cards,
            xg_events: vec![],
        },
        ticks,
    })
}
