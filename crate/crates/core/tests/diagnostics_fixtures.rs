mod common;

use common::fixtures::{door, fixtures, kinds, plain, walk};
use socialgrid::diagnostics::{
    classify_reason, classify_vote, detect_trace, failure_step_fraction, reason_accuracy_table, DetectorParams,
    FailureKind, VoteReasonClass,
};
use socialgrid::engine::VoteTarget;
use socialgrid::{Action, AgentId, EpisodeLog, Role, VoteRecord};

use Action::*;

#[test]
fn each_golden_trace_triggers_exactly_its_kind() {
    let all = fixtures();
    assert_eq!(all.len(), FailureKind::ALL.len());
    for (kind, trace) in all {
        assert_eq!(kinds(&trace), vec![kind], "fixture for {kind:?}");
    }
}

#[test]
fn below_threshold_traces_are_clean() {
    let a = door(50);
    assert!(kinds(&walk(&[(OpenDoor, a), (CloseDoor, a)])).is_empty());
    assert!(kinds(&plain(&[MoveForward, MoveBackward, MoveForward])).is_empty());
    assert!(kinds(&plain(&[StrafeLeft, StrafeRight, StrafeLeft])).is_empty());
    assert!(kinds(&plain(&[TurnLeft, TurnRight, TurnLeft])).is_empty());
    assert!(kinds(&plain(&[Noop; 4])).is_empty());
    assert!(kinds(&plain(&[DoTask; 9])).is_empty());
    assert!(kinds(&plain(&[MoveForward, MoveForward, MoveBackward, MoveBackward])).is_empty());
}

#[test]
fn corridor_walk_is_clean() {
    assert!(kinds(&plain(&[MoveForward; 40])).is_empty());
}

#[test]
fn completing_toggles_are_not_fixation() {
    let mut trace = plain(&[DoTask; 13]);
    for s in &mut trace {
        s.progressed = true;
    }
    assert!(kinds(&trace).is_empty());
}

#[test]
fn flags_are_idempotent() {
    for (_, trace) in fixtures() {
        let p = DetectorParams::default();
        assert_eq!(detect_trace(AgentId(3), &trace, &p), detect_trace(AgentId(3), &trace, &p));
    }
}

#[test]
fn stall_window_and_default_thresholds() {
    let p = DetectorParams::default();
    assert_eq!((p.door_toggle.count, p.door_toggle.window), (3, 10));
    assert_eq!((p.door_spam.count, p.door_spam.window), (5, 15));
    assert_eq!((p.ping_pong.count, p.ping_pong.window, p.ping_pong_positions), (4, 20, 3));
    assert_eq!((p.move_backtrack.count, p.move_backtrack.window), (3, 15));
    assert_eq!((p.move_oscillation.count, p.move_oscillation.window), (4, 10));
    assert_eq!((p.turn_toggle.count, p.turn_toggle.window), (4, 8));
    assert_eq!((p.stall_noop, p.task_fixation), (5, 10));
    let flags = detect_trace(AgentId(0), &plain(&[Noop; 7]), &p);
    assert_eq!(flags.len(), 1);
    assert_eq!(flags[0].window, (0, 30));
}

#[test]
fn empty_log_fractions_are_zero() {
    let f = failure_step_fraction(&EpisodeLog::default(), &[]);
    assert!(f.values().all(|&v| v == 0.0));
    assert_eq!(f.len(), FailureKind::ALL.len());
}

#[test]
fn vote_reason_examples() {
    assert_eq!(classify_reason("No evidence to distinguish, voting randomly."), VoteReasonClass::EvidenceScarcity);
    assert_eq!(classify_reason("player2 moved erratically, reducing trust."), VoteReasonClass::WeakHeuristics);
    assert_eq!(classify_reason("player5 completed tasks consistently."), VoteReasonClass::Other);
    assert_eq!(classify_reason(""), VoteReasonClass::Other);
    assert_eq!(classify_reason("I saw Player_1 kill, no evidence otherwise"), VoteReasonClass::StrongEvidence);
    assert_eq!(classify_reason("Trust is tied, so arbitrary"), VoteReasonClass::EvidenceScarcity);
    assert_eq!(classify_reason("Stayed in a loop near the body"), VoteReasonClass::WeakHeuristics);
}

#[test]
fn misdirection_and_over_trust() {
    let roles = [Role::Crewmate, Role::Impostor, Role::Impostor, Role::Crewmate]
        .into_iter()
        .enumerate()
        .map(|(i, r)| (AgentId(i), r))
        .collect();
    let vote = |voter: usize, target: usize, trust: &[(usize, f64)]| VoteRecord {
        target: VoteTarget::Player(AgentId(target)),
        trust_scores: trust.iter().map(|&(a, t)| (AgentId(a), t)).collect(),
        thought: "player0 seems off".into(),
        ..VoteRecord::skip(AgentId(voter))
    };
    assert!(classify_vote(&vote(1, 0, &[(0, 0.2), (2, 0.8), (3, 0.6)]), &roles).misdirection);
    assert!(!classify_vote(&vote(1, 0, &[(0, 0.2), (2, 0.5), (3, 0.6)]), &roles).misdirection);
    assert!(!classify_vote(&vote(1, 2, &[(0, 0.2), (2, 0.9), (3, 0.6)]), &roles).misdirection);
    assert!(classify_vote(&vote(0, 3, &[(1, 0.9), (2, 0.1), (3, 0.2)]), &roles).over_trust);
    assert!(!classify_vote(&vote(0, 3, &[(1, 0.6), (2, 0.1), (3, 0.2)]), &roles).over_trust);
}

#[test]
fn empty_corpus_reports_no_data() {
    let t = reason_accuracy_table(&[]);
    assert!(t.no_data);
    assert!(t.classes.is_empty());
}
