use std::collections::BTreeMap;

use proptest::prelude::*;
use socialgrid::engine::{Cause, GameOutcome};
use socialgrid::league::{
    compute_elo, elo_update, lean_probability, lean_score, schedule, win_matrices, EloGame, EloParams, EpisodeResult,
    LeanInputs, Matchup, Pattern, WinLeanParams,
};
use socialgrid::{MapConfig, Team};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

fn games_strategy() -> impl Strategy<Value = Vec<EloGame>> {
    prop::collection::vec((0usize..5, 0usize..5, any::<bool>()), 1..60).prop_map(|v| {
        v.into_iter()
            .map(|(c, i, w)| EloGame { crew: format!("p{c}"), impostor: format!("p{i}"), crew_won: w })
            .collect()
    })
}

proptest! {
    #[test]
    fn elo_conserves_rating_mass(games in games_strategy(), seed in any::<u64>()) {
        let pols = names(5);
        let t = compute_elo(&pols, &games, EloParams::default(), seed).unwrap();
        let total: f64 = t.ratings.values().sum();
        prop_assert!((total - 1500.0 * 5.0).abs() < 1e-9);
    }

    #[test]
    fn every_update_is_zero_sum(r1 in 800.0f64..2200.0, r2 in 800.0f64..2200.0, won in any::<bool>()) {
        let mut ratings: BTreeMap<String, f64> = [("a".to_string(), r1), ("b".to_string(), r2)].into();
        let game = EloGame { crew: "a".into(), impostor: "b".into(), crew_won: won };
        let d = elo_update(&mut ratings, &game, 64.0);
        prop_assert_eq!(ratings["a"], r1 + d);
        prop_assert_eq!(ratings["b"], r2 - d);
        let sign_ok = if won { d > 0.0 } else { d < 0.0 };
        prop_assert!(sign_ok);
    }

    #[test]
    fn elo_is_deterministic(games in games_strategy(), seed in any::<u64>()) {
        let pols = names(5);
        prop_assert_eq!(
            compute_elo(&pols, &games, EloParams::default(), seed).unwrap(),
            compute_elo(&pols, &games, EloParams::default(), seed).unwrap()
        );
    }

    #[test]
    fn win_lean_is_monotone(
        tc in 0.0f64..1.0, det in 0.0f64..1.0, c in 0u32..7, i in 0u32..3,
        dtc in 0.001f64..0.5, ddet in 0.001f64..0.5,
    ) {
        let p = WinLeanParams { alpha: 0.5, ..WinLeanParams::default() };
        let base = LeanInputs { task_completion: tc, crew_alive: c, impostors_alive: i, crew_initial: 7, detection: det };
        let f = |x: &LeanInputs| lean_probability(lean_score(x, &p), p.alpha);
        let y = f(&base);
        prop_assert!(y > 0.0 && y < 1.0);
        let more_tasks = f(&LeanInputs { task_completion: tc + dtc, ..base });
        let more_detection = f(&LeanInputs { detection: det + ddet, ..base });
        let more_crew = f(&LeanInputs { crew_alive: c + 1, ..base });
        prop_assert!(more_tasks > y);
        prop_assert!(more_detection > y);
        prop_assert!(more_crew > y);
        if i > 0 {
            let fewer_imps = f(&LeanInputs { impostors_alive: i - 1, ..base });
            prop_assert!(fewer_imps > y);
        }
    }
}

#[test]
fn equal_ratings_single_game() {
    let pols = names(2);
    let games = [EloGame { crew: "p0".into(), impostor: "p1".into(), crew_won: true }];
    let t = compute_elo(&pols, &games, EloParams { iterations: 1, ..EloParams::default() }, 9).unwrap();
    assert_eq!(t.ratings["p0"] - 1500.0, 32.0);
    assert_eq!(t.ratings["p1"] - 1500.0, -32.0);
}

#[test]
fn perfect_winner_gains_every_iteration() {
    let pols = names(3);
    let mut games = Vec::new();
    for opp in ["p1", "p2"] {
        games.push(EloGame { crew: "p0".into(), impostor: opp.into(), crew_won: true });
        games.push(EloGame { crew: opp.into(), impostor: "p0".into(), crew_won: false });
    }
    let mut last = 1500.0;
    for it in 1..=10 {
        let t = compute_elo(&pols, &games, EloParams { iterations: it, ..EloParams::default() }, 3).unwrap();
        assert!(t.ratings["p0"] > last);
        last = t.ratings["p0"];
    }
}

#[test]
fn unplayed_policy_stays_at_base() {
    let pols = names(3);
    let games = [EloGame { crew: "p0".into(), impostor: "p1".into(), crew_won: false }];
    assert_eq!(compute_elo(&pols, &games, EloParams::default(), 0).unwrap().ratings["p2"], 1500.0);
}

#[test]
fn worked_win_lean_value() {
    let x = LeanInputs { task_completion: 1.0, crew_alive: 5, impostors_alive: 2, crew_initial: 5, detection: 1.0 };
    let p = WinLeanParams::default();
    let s = lean_score(&x, &p);
    assert!((s - 0.95).abs() < 1e-15);
    // 1/2 (1 + tanh 1.9) to 50 digits.
    let expected = 0.978_118_729_063_869_526_047_748_703_014_326_517_340_266_944_367_75_f64;
    assert!((lean_probability(s, p.alpha) - expected).abs() < 1e-15);
    assert_eq!(lean_probability(0.0, 2.0), 0.5);
}

fn matchup(crew: &str, imp: &str, crew_wins: usize, n: usize) -> Matchup {
    let outcome = |w: bool| GameOutcome {
        winner: if w { Team::Crew } else { Team::Impostors },
        cause: if w { Cause::AllImpostorsEjected } else { Cause::ImpostorParity },
    };
    Matchup {
        crew_policy: crew.into(),
        impostor_policy: imp.into(),
        pattern: "x".into(),
        results: (0..n)
            .map(|k| EpisodeResult { seed: k as u64, outcome: Some(outcome(k < crew_wins)), error: None, log: None })
            .collect(),
    }
}

#[test]
fn matrices_follow_crew_side_rows() {
    let pols = names(2);
    let ms = [matchup("p0", "p1", 3, 10), matchup("p1", "p0", 0, 4), matchup("p0", "p0", 4, 4)];
    let m = win_matrices(&pols, &ms);
    assert_eq!(m.overall[0][1], Some(0.3));
    assert_eq!(m.overall[1][0], Some(0.0));
    assert_eq!(m.impostor[1][0], Some(1.0));
    assert_eq!(m.overall[0][0], Some(0.5));
    assert_eq!(m.impostor[0][0], Some(0.0));
    assert_eq!(m.overall[1][1], Some(0.5));
    assert_eq!(m.impostor[1][1], None);
}

#[test]
fn schedule_covers_ordered_pairs() {
    let pat = [Pattern { name: "a".into(), map: MapConfig::default() }, Pattern { name: "b".into(), map: MapConfig::default() }];
    let s = schedule(&names(6), &pat);
    assert_eq!(s.len(), 72);
    let per_pattern: std::collections::BTreeSet<_> = s.iter().filter(|m| m.2 == 0).map(|m| (m.0.clone(), m.1.clone())).collect();
    assert_eq!(per_pattern.len(), 36);
    assert_eq!(per_pattern.iter().filter(|(c, i)| c == i).count(), 6);
}
