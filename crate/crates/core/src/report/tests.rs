use super::*;
use crate::panel::{apply_sample_filters, MatchSeries};
use crate::simulate::{make_fixture, simulate_season, SimConfig};
use approx::assert_relative_eq;

fn obs(t: u32, improb: f64, stakerel: Option<f64>, home: bool) -> MinuteObservation {
    MinuteObservation {
        match_id: "x".into(),
        t,
        mintogoal: 30 - t,
        improb: Some(improb),
        improb_opp: Some(0.3),
        improbpre: 0.5,
        redcardteam: false,
        redcardopp: false,
        xgdiff: 0.1 * f64::from(t),
        home,
        volumediff: 2.0,
        stakerel,
        market_open: true,
    }
}

fn panel_of(observations: Vec<MinuteObservation>) -> Panel {
    let s = MatchSeries::new("x".into(), "a".into(), "b".into(), 30, observations);
    Panel::from_matches(vec![s]).unwrap()
}

fn simulated() -> Panel {
    let season = simulate_season(&SimConfig {
        n_matches: 30,
        seed: 8,
        ..SimConfig::default()
    })
    .unwrap();
    apply_sample_filters(&season.matches).unwrap().0
}

#[test]
fn constant_and_binary_columns() {
    let p = panel_of(
        (1..=4)
            .map(|t| obs(t, 0.4, Some(0.5), t % 2 == 0))
            .collect(),
    );
    let table = summarize(&p).unwrap();
    let get = |n: &str| table.iter().find(|r| r.variable == n).unwrap();
    let v = get("volumediff");
    assert_eq!((v.mean, v.median, v.sd), (2.0, 2.0, 0.0));
    let h = get("home");
    assert_eq!(h.mean, 0.5);
    assert_relative_eq!(h.sd, (4.0f64 / (4.0 * 3.0)).sqrt(), epsilon = 1e-15);
    assert_eq!(h.median, 0.5);
    assert_eq!(get("t").median, 2.5);
}

#[test]
fn missing_cells_are_skipped() {
    let p = panel_of(vec![obs(1, 0.4, None, true), obs(2, 0.4, Some(0.2), true)]);
    let table = summarize(&p).unwrap();
    let s = table.iter().find(|r| r.variable == "stakerel").unwrap();
    assert_eq!(s.n, 1);
    assert!(s.sd.is_nan());
}

#[test]
fn empty_panel_is_an_error() {
    assert!(summarize(&Panel::from_matches(vec![]).unwrap()).is_err());
}

#[test]
fn summary_matches_streaming_oracle() {
    let p = simulated();
    let table = summarize(&p).unwrap();
    for row in &table {
        // Welford
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for o in p.observations() {
            if let Some(x) = variable(&row.variable, o) {
                n += 1.0;
                let d = x - mean;
                mean += d / n;
                m2 += d * (x - mean);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        assert_relative_eq!(row.mean, mean, epsilon = 1e-10, max_relative = 1e-10);
        assert_relative_eq!(
            row.sd,
            (m2 / (n - 1.0)).sqrt(),
            epsilon = 1e-10,
            max_relative = 1e-10
        );
        assert_eq!((row.min, row.max), (lo, hi));
        assert!(row.min <= row.median && row.median <= row.max);
    }
}

#[test]
fn summary_is_permutation_invariant() {
    let p = simulated();
    let mut rev = p.clone();
    for m in &mut rev.matches {
        m.observations.reverse();
    }
    rev.matches.reverse();
    let (a, b) = (summarize(&p).unwrap(), summarize(&rev).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x.mean, y.mean, max_relative = 1e-12);
        assert_relative_eq!(x.sd, y.sd, max_relative = 1e-12);
        assert_eq!(x.median, y.median);
    }
}

#[test]
fn correlation_matrix_properties() {
    let p = simulated();
    let c = correlations(&p).unwrap();
    let k = c.names.len();
    let idx = |n: &str| c.names.iter().position(|x| x == n).unwrap();
    for a in 0..k {
        for b in 0..k {
            assert_eq!(c.values[a][b], c.values[b][a]);
            if let Some(v) = c.values[a][b] {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        if let Some(d) = c.values[a][a] {
            assert_eq!(d, 1.0);
        }
    }
    // direct formula for improb vs improbpre
    let rows: Vec<(f64, f64)> = p
        .observations()
        .filter(|o| o.improb.is_some() && o.stakerel.is_some())
        .map(|o| (o.improb.unwrap(), o.improbpre))
        .collect();
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    let sxx: f64 = rows.iter().map(|r| (r.0 - mx).powi(2)).sum();
    let syy: f64 = rows.iter().map(|r| (r.1 - my).powi(2)).sum();
    let r = c.values[idx("improb")][idx("improbpre")].unwrap();
    assert_relative_eq!(r, sxy / (sxx * syy).sqrt(), epsilon = 1e-10);
    assert!(r > 0.8);
}

#[test]
fn zero_variance_columns_are_undefined() {
    let p = panel_of(
        (1..=5)
            .map(|t| obs(t, 0.3 + 0.01 * f64::from(t), Some(0.4), true))
            .collect(),
    );
    let c = correlations(&p).unwrap();
    let home = c.names.iter().position(|x| x == "home").unwrap();
    let t = c.names.iter().position(|x| x == "t").unwrap();
    let improb = c.names.iter().position(|x| x == "improb").unwrap();
    assert!(c.values[home][t].is_none());
    assert!(c.values[home][home].is_none());
    assert_relative_eq!(c.values[t][improb].unwrap(), 1.0, epsilon = 1e-12);
    let xg = c.names.iter().position(|x| x == "xgdiff").unwrap();
    let neg = c.names.iter().position(|x| x == "mintogoal").unwrap();
    assert_relative_eq!(c.values[xg][neg].unwrap(), -1.0, epsilon = 1e-12);
}

fn entry(id: &str, n: usize, aic: f64) -> ModelEntry {
    ModelEntry {
        id: id.into(),
        n_obs: n,
        n_params: 3,
        loglik: 0.0,
        aic,
    }
}

#[test]
fn published_aic_difference() {
    let rows = compare_models(&[
        entry("noss", 9185, -5226.72),
        entry("basic", 9185, -14581.68),
    ])
    .unwrap();
    assert_eq!(rows[0].id, "basic");
    assert_eq!(rows[0].delta_aic, 0.0);
    assert!((rows[1].delta_aic - 9354.96).abs() < 1e-9);
    assert!(comparison_markdown(&rows).contains("9354.96"));
}

#[test]
fn comparison_edge_cases() {
    let single = compare_models(&[entry("a", 10, 3.0)]).unwrap();
    assert_eq!(single[0].delta_aic, 0.0);
    let tied = compare_models(&[
        entry("b", 10, 1.0),
        entry("a", 10, 1.0),
        entry("c", 10, 0.5),
    ])
    .unwrap();
    let ids: Vec<&str> = tied.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["c", "a", "b"]);
    assert!(tied.iter().all(|r| r.delta_aic >= 0.0));
    assert!(compare_models(&[entry("a", 10, 1.0), entry("b", 11, 2.0)]).is_err());
    assert!(compare_models(&[]).is_err());
}

#[test]
fn dortmund_series_starts_at_published_probability() {
    let (panel, _) = apply_sample_filters(&make_fixture("dortmund_like").unwrap()).unwrap();
    let rows = export_match_series(&panel, "dortmund_like").unwrap();
    assert_eq!(rows.len(), 10);
    assert!((rows[0].improb_team.unwrap() - 0.747).abs() < 1e-12);
    assert!(export_match_series(&panel, "missing").is_err());
}

#[test]
fn gaps_and_missing_stakes_stay_empty() {
    let mut o = vec![obs(1, 0.4, Some(0.5), true), obs(2, 0.4, None, true)];
    o.push(obs(5, 0.4, Some(0.6), true));
    let p = panel_of(o);
    let rows = export_match_series(&p, "x").unwrap();
    assert_eq!(rows.len(), 29);
    assert!(rows[2].gap && rows[3].gap && !rows[4].gap);
    let mut buf = Vec::new();
    write_series_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t,improb_team,improb_opp,stakerel,market_open,gap"
    );
    assert_eq!(lines[2], "2,0.4,0.3,,1,0");
    assert_eq!(lines[3], "3,,,,,1");
}

#[test]
fn correlation_csv_marks_undefined_cells_empty() {
    let p = panel_of(
        (1..=5)
            .map(|t| obs(t, 0.3 + 0.01 * f64::from(t), Some(0.4), true))
            .collect(),
    );
    let mut buf = Vec::new();
    write_correlations_csv(&correlations(&p).unwrap(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let home_line = text.lines().find(|l| l.starts_with("home,")).unwrap();
    assert!(home_line.split(',').skip(1).all(|c| c.is_empty()));
}
