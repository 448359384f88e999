use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn meta(id: &str, goal: Option<(u32, Side)>) -> MatchMeta {
    MatchMeta {
        match_id: id.to_string(),
        home_team: "Dortmund".into(),
        away_team: "Stuttgart".into(),
        prematch: OddsTriple::new(1.3, 6.0, 10.0),
        first_goal_minute: goal.map(|g| g.0),
        first_scorer: goal.map(|g| g.1),
        red_cards: vec![],
        xg_events: vec![],
    }
}

/// One tick per second for minutes `1..=minutes` with constant per-second stakes.
fn ticks(id: &str, minutes: u32, stakes: (f64, f64, f64)) -> Vec<TickRecord> {
    (0..minutes * 60)
        .map(|s| TickRecord {
            match_id: id.to_string(),
            t_sec: s,
            odds_home: 1.5,
            odds_draw: 4.0,
            odds_away: 6.0,
            stake_home: stakes.0,
            stake_draw: stakes.1,
            stake_away: stakes.2,
            market_open: true,
        })
        .collect()
}

#[test]
fn all_money_on_scorer() {
    let m = meta("a", Some((3, Side::Home)));
    let obs = aggregate_minutes(&ticks("a", 2, (1.0, 0.0, 0.0)), &m).unwrap();
    assert_eq!(obs.len(), 2);
    assert!(obs.iter().all(|o| o.stakerel == Some(1.0)));
}

#[test]
fn draw_stakes_excluded() {
    let m = meta("a", Some((5, Side::Away)));
    let mut tk = ticks("a", 1, (0.0, 0.0, 0.0));
    tk[0].stake_away = 30.0;
    tk[1].stake_home = 10.0;
    tk[2].stake_draw = 13.0;
    let obs = aggregate_minutes(&tk, &m).unwrap();
    assert_relative_eq!(obs[0].stakerel.unwrap(), 0.75, epsilon = 1e-15);
}

#[test]
fn mintogoal_reaches_one_before_goal() {
    let m = meta("a", Some((30, Side::Home)));
    let obs = aggregate_minutes(&ticks("a", 40, (1.0, 1.0, 1.0)), &m).unwrap();
    assert_eq!(obs.len(), 29);
    let last = obs.last().unwrap();
    assert_eq!((last.t, last.mintogoal), (29, 1));
    assert_eq!(Covariate::InvMintogoal.value(last), 1.0);
}

#[test]
fn odds_use_last_open_tick_of_minute() {
    let m = meta("a", Some((10, Side::Home)));
    let mut tk = ticks("a", 2, (1.0, 0.0, 1.0));
    tk[59].odds_home = 1.2;
    tk[59].market_open = false;
    tk[58].odds_home = 1.4;
    let obs = aggregate_minutes(&tk, &m).unwrap();
    let expect = implied_probs(&OddsTriple::new(1.4, 4.0, 6.0)).unwrap().home;
    assert_relative_eq!(obs[0].improb.unwrap(), expect, epsilon = 1e-15);
}

#[test]
fn closed_minute_carries_odds_forward_and_is_flagged() {
    let m = meta("a", Some((10, Side::Home)));
    let mut tk = ticks("a", 3, (1.0, 0.0, 1.0));
    for t in &mut tk[60..120] {
        t.market_open = false;
        t.odds_home = 99.0;
        t.stake_home = 0.0;
        t.stake_away = 0.0;
    }
    let obs = aggregate_minutes(&tk, &m).unwrap();
    assert!(!obs[1].market_open);
    assert_eq!(obs[1].improb, obs[0].improb);
    assert_eq!(obs[1].stakerel, None);
    assert!(obs[2].market_open);
}

#[test]
fn no_prior_odds_marked_missing() {
    let m = meta("a", Some((10, Side::Home)));
    let mut tk = ticks("a", 2, (1.0, 0.0, 1.0));
    for t in &mut tk[..60] {
        t.market_open = false;
    }
    let obs = aggregate_minutes(&tk, &m).unwrap();
    assert_eq!(obs[0].improb, None);
    assert!(obs[1].improb.is_some());
}

#[test]
fn unsorted_ticks_rejected() {
    let m = meta("a", Some((10, Side::Home)));
    let mut tk = ticks("a", 1, (1.0, 0.0, 1.0));
    tk.swap(3, 4);
    assert!(matches!(aggregate_minutes(&tk, &m), Err(Error::Data(_))));
}

#[test]
fn halftime_gap_not_emitted() {
    let m = meta("a", Some((70, Side::Home)));
    let tk: Vec<_> = ticks("a", 69, (1.0, 0.0, 1.0))
        .into_iter()
        .filter(|t| !(47..62).contains(&t.minute()))
        .collect();
    let obs = aggregate_minutes(&tk, &m).unwrap();
    assert_eq!(obs.len(), 69 - 15);
    assert_eq!(obs[46].t, 47 - 1 + 16);
}

#[test]
fn orientation() {
    let home = meta("a", Some((10, Side::Home)));
    let away = meta("a", Some((10, Side::Away)));
    assert_eq!(orient_to_scorer(&home, 1, 2).unwrap(), (1, 2));
    assert_eq!(orient_to_scorer(&away, 1, 2).unwrap(), (2, 1));
    assert!(orient_to_scorer(&meta("a", None), 1, 2).is_err());

    let obs = aggregate_minutes(&ticks("a", 9, (1.0, 0.0, 0.0)), &away).unwrap();
    assert!(obs.iter().all(|o| !o.home && o.stakerel == Some(0.0)));
    let pre = implied_probs(&away.prematch).unwrap();
    assert_relative_eq!(obs[0].improbpre, pre.away, epsilon = 1e-15);
}

#[test]
fn red_card_to_opponent_from_minute_12() {
    let mut m = meta("a", Some((20, Side::Home)));
    m.red_cards.push(RedCardEvent {
        minute: 12,
        side: Side::Away,
    });
    let obs = aggregate_minutes(&ticks("a", 19, (1.0, 0.0, 1.0)), &m).unwrap();
    for o in &obs {
        assert_eq!(o.redcardopp, o.t >= 12, "minute {}", o.t);
        assert!(!o.redcardteam);
    }
}

#[test]
fn xgdiff_is_cumulative_from_scorer_view() {
    let mut m = meta("a", Some((20, Side::Away)));
    m.xg_events = vec![
        XgEvent {
            minute: 3,
            side: Side::Home,
            xg: 0.3,
        },
        XgEvent {
            minute: 8,
            side: Side::Away,
            xg: 0.5,
        },
    ];
    let obs = aggregate_minutes(&ticks("a", 19, (1.0, 0.0, 1.0)), &m).unwrap();
    assert_eq!(obs[1].xgdiff, 0.0);
    assert_relative_eq!(obs[2].xgdiff, -0.3);
    assert_relative_eq!(obs[7].xgdiff, 0.2, epsilon = 1e-15);
}

#[test]
fn sample_filters() {
    let matches = vec![
        MatchData {
            meta: meta("m1", None),
            ticks: ticks("m1", 5, (1.0, 0.0, 1.0)),
        },
        MatchData {
            meta: meta("m2", Some((5, Side::Home))),
            ticks: ticks("m2", 5, (1.0, 0.0, 1.0)),
        },
        MatchData {
            meta: meta("m3", Some((6, Side::Home))),
            ticks: ticks("m3", 9, (1.0, 0.0, 1.0)),
        },
    ];
    let (panel, report) = apply_sample_filters(&matches).unwrap();
    assert_eq!(report.scoreless, 1);
    assert_eq!(report.early_goal, 1);
    assert_eq!(report.matches_retained, 1);
    let m3 = panel.get("m3").unwrap();
    let ts: Vec<u32> = m3.observations.iter().map(|o| o.t).collect();
    assert_eq!(ts, vec![1, 2, 3, 4, 5]);
}

#[test]
fn duplicate_match_rejected() {
    let m = MatchData {
        meta: meta("m", Some((8, Side::Home))),
        ticks: ticks("m", 7, (1.0, 0.0, 1.0)),
    };
    assert!(apply_sample_filters(&[m.clone(), m]).is_err());
}

fn volumes() -> BTreeMap<String, f64> {
    [
        ("Dortmund".to_string(), 55.70),
        ("Stuttgart".to_string(), 12.57),
    ]
    .into()
}

#[test]
fn volumediff_signs() {
    for (side, expect) in [(Side::Home, 43.13), (Side::Away, -43.13)] {
        let data = MatchData {
            meta: meta("m", Some((8, side))),
            ticks: ticks("m", 7, (1.0, 0.0, 1.0)),
        };
        let (panel, _) = apply_sample_filters(&[data]).unwrap();
        let panel = compute_volumediff(panel, &volumes()).unwrap();
        for o in panel.observations() {
            assert_relative_eq!(o.volumediff, expect, epsilon = 1e-12);
        }
    }
    let same: BTreeMap<String, f64> = [
        ("Dortmund".to_string(), 5.0),
        ("Stuttgart".to_string(), 5.0),
    ]
    .into();
    let data = MatchData {
        meta: meta("m", Some((8, Side::Home))),
        ticks: ticks("m", 7, (1.0, 0.0, 1.0)),
    };
    let (panel, _) = apply_sample_filters(&[data]).unwrap();
    assert!(compute_volumediff(panel, &same)
        .unwrap()
        .observations()
        .all(|o| o.volumediff == 0.0));
}

#[test]
fn volumediff_missing_team_named() {
    let data = MatchData {
        meta: meta("m", Some((8, Side::Home))),
        ticks: ticks("m", 7, (1.0, 0.0, 1.0)),
    };
    let (panel, _) = apply_sample_filters(&[data]).unwrap();
    let partial: BTreeMap<String, f64> = [("Dortmund".to_string(), 1.0)].into();
    match compute_volumediff(panel, &partial) {
        Err(Error::MissingTeam(t)) => assert_eq!(t, "Stuttgart"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn season_volumes_average_per_minute() {
    let data = MatchData {
        meta: meta("m", None),
        ticks: ticks("m", 4, (0.5, 0.0, 0.25)),
    };
    let v = season_volumes(&[data]).unwrap();
    assert_relative_eq!(v["Dortmund"], 30.0, epsilon = 1e-12);
    assert_relative_eq!(v["Stuttgart"], 15.0, epsilon = 1e-12);
}

#[test]
fn closed_market_exclusion() {
    let m = meta("m", Some((11, Side::Home)));
    let mut tk = ticks("m", 10, (1.0, 0.0, 1.0));
    for t in tk.iter_mut().filter(|t| matches!(t.minute(), 4 | 7)) {
        t.market_open = false;
    }
    let (panel, _) = apply_sample_filters(&[MatchData { meta: m, ticks: tk }]).unwrap();
    assert_eq!(panel.n_observations(), 10);
    let (bettors, closed) = exclude_closed_market(&panel);
    assert_eq!(closed, 2);
    assert_eq!(bettors.n_observations(), 8);
    let skips = &bettors.matches[0].skipped_before;
    assert_eq!(skips, &vec![0, 0, 0, 1, 0, 1, 0, 0]);

    let (unchanged, none) = exclude_closed_market(&bettors);
    assert_eq!(none, 0);
    assert_eq!(unchanged, bettors);
}

#[test]
fn design_rows() {
    let m = meta("m", Some((14, Side::Home)));
    let obs = aggregate_minutes(&ticks("m", 13, (1.0, 0.0, 1.0)), &m).unwrap();
    let mut o = obs[9].clone();
    o.improbpre = 0.747;
    let row = Covariate::row(
        &[
            Covariate::Constant,
            Covariate::ImprobPre,
            Covariate::Minute,
            Covariate::MinuteSquared,
            Covariate::ImprobPreMinute,
        ],
        &o,
    );
    assert_eq!(&row[..4], &[1.0, 0.747, 10.0, 100.0]);
    assert_relative_eq!(row[4], 7.47, epsilon = 1e-12);
    assert_eq!(Covariate::InvMintogoal.value(&o), 0.25);
}

#[test]
fn panel_csv_round_trip() {
    let mut m = meta("m", Some((9, Side::Away)));
    m.red_cards.push(RedCardEvent {
        minute: 3,
        side: Side::Home,
    });
    let mut tk = ticks("m", 8, (1.0, 0.2, 3.0));
    for t in tk.iter_mut().filter(|t| t.minute() == 5) {
        t.market_open = false;
        t.stake_home = 0.0;
        t.stake_away = 0.0;
    }
    let (panel, _) = apply_sample_filters(&[MatchData { meta: m, ticks: tk }]).unwrap();
    let mut buf = Vec::new();
    write_panel_csv(&panel, &mut buf).unwrap();
    let header = String::from_utf8(buf.clone()).unwrap();
    assert!(header.starts_with(
        "match_id,team,opponent,t,mintogoal,improb,improbopp,improbpre,redcardteam,redcardopp,xgdiff,home,volumediff,stakerel,market_open"
    ));
    let back = read_panel_csv(buf.as_slice()).unwrap();
    assert_eq!(back, panel);
}

#[test]
fn meta_csv_round_trip() {
    let mut a = meta("a", Some((9, Side::Away)));
    a.red_cards.push(RedCardEvent {
        minute: 3,
        side: Side::Home,
    });
    a.xg_events.push(XgEvent {
        minute: 2,
        side: Side::Away,
        xg: 0.12,
    });
    let b = meta("b", None);
    let mut buf = Vec::new();
    write_meta_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
    assert_eq!(read_meta_csv(buf.as_slice()).unwrap(), vec![a, b]);
}

proptest! {
    #[test]
    fn stakerel_scale_invariant(
        stakes in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0), 60),
        c in 0.01f64..1000.0,
    ) {
        let m = meta("p", Some((5, Side::Home)));
        let mut tk = ticks("p", 1, (0.0, 0.0, 0.0));
        for (t, s) in tk.iter_mut().zip(&stakes) {
            (t.stake_home, t.stake_draw, t.stake_away) = *s;
        }
        let base = aggregate_minutes(&tk, &m).unwrap()[0].stakerel;
        for t in &mut tk {
            t.stake_home *= c;
            t.stake_draw *= c;
            t.stake_away *= c;
        }
        let scaled = aggregate_minutes(&tk, &m).unwrap()[0].stakerel;
        match (base, scaled) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn aggregation_conserves_stakes(
        stakes in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0), 240),
    ) {
        let mut tk = ticks("p", 4, (0.0, 0.0, 0.0));
        for (t, s) in tk.iter_mut().zip(&stakes) {
            (t.stake_home, t.stake_draw, t.stake_away) = *s;
        }
        let raw = aggregate_raw(&tk).unwrap();
        let total_ticks: f64 = stakes.iter().map(|s| s.0 + s.1 + s.2).sum();
        let total_min: f64 = raw.iter().map(|r| r.stake_home + r.stake_draw + r.stake_away).sum();
        prop_assert!((total_ticks - total_min).abs() < 1e-9);
    }

    #[test]
    fn orientation_is_an_involution(a in any::<i32>(), b in any::<i32>(), home in any::<bool>()) {
        let side = if home { Side::Home } else { Side::Away };
        let m = meta("p", Some((9, side)));
        let flipped = meta("p", Some((9, side.other())));
        let (x, y) = orient_to_scorer(&m, a, b).unwrap();
        prop_assert_eq!(orient_to_scorer(&flipped, a, b).unwrap(), (y, x));
        prop_assert_eq!(orient_to_scorer(&m, x, y).unwrap(), (a, b));
    }
}
