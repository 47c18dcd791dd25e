//! Behavioral failure detectors over action traces and the vote-reasoning
//! classifier.
//!
//! Detector windows count the agent's own actions (one per macro-step), so
//! a window of 10 spans the agent's last 10 decisions. Each detector looks
//! at the trailing window ending at every action; a match flags the span
//! from the first contributing action to the current one, and overlapping
//! spans of the same kind are merged.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::action::{Action, AgentId, Role};
use crate::engine::{VoteRecord, VoteTarget};
use crate::log::{EpisodeLog, StepEvent, StepOutcome};
use crate::world::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    DoorToggle,
    DoorSpam,
    PositionPingPong,
    MoveBacktrackLoop,
    StrafeBacktrackLoop,
    MoveOscillation,
    StrafeOscillation,
    TurnToggle,
    StallNoop,
    TaskFixation,
}

impl FailureKind {
    pub const ALL: [FailureKind; 10] = [
        FailureKind::DoorToggle,
        FailureKind::DoorSpam,
        FailureKind::PositionPingPong,
        FailureKind::MoveBacktrackLoop,
        FailureKind::StrafeBacktrackLoop,
        FailureKind::MoveOscillation,
        FailureKind::StrafeOscillation,
        FailureKind::TurnToggle,
        FailureKind::StallNoop,
        FailureKind::TaskFixation,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub count: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Door actions on the same door.
    pub door_toggle: Threshold,
    /// Door actions without a position change.
    pub door_spam: Threshold,
    /// Returns to an already visited position; at most `ping_pong_positions`
    /// distinct positions in the window.
    pub ping_pong: Threshold,
    pub ping_pong_positions: usize,
    /// Forward/backward run pairs.
    pub move_backtrack: Threshold,
    pub strafe_backtrack: Threshold,
    /// Alternating single-step moves.
    pub move_oscillation: Threshold,
    pub strafe_oscillation: Threshold,
    /// Turns without a position change.
    pub turn_toggle: Threshold,
    /// Consecutive NOOPs.
    pub stall_noop: usize,
    /// Consecutive DO_TASK without progress.
    pub task_fixation: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            door_toggle: Threshold { count: 3, window: 10 },
            door_spam: Threshold { count: 5, window: 15 },
            ping_pong: Threshold { count: 4, window: 20 },
            ping_pong_positions: 3,
            move_backtrack: Threshold { count: 3, window: 15 },
            strafe_backtrack: Threshold { count: 3, window: 15 },
            move_oscillation: Threshold { count: 4, window: 10 },
            strafe_oscillation: Threshold { count: 4, window: 10 },
            turn_toggle: Threshold { count: 4, window: 8 },
            stall_noop: 5,
            task_fixation: 10,
        }
    }
}

/// One action as seen by the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceStep {
    pub step: u64,
    /// Requested action, or the executed one if the request was not a
    /// valid code.
    pub action: Action,
    pub from: Cell,
    pub to: Cell,
    pub target: Option<Cell>,
    /// A task toggle took effect.
    pub progressed: bool,
}

impl TraceStep {
    pub fn from_event(step: u64, e: &StepEvent) -> Self {
        Self {
            step,
            action: e.requested().unwrap_or(e.executed),
            from: e.from.cell,
            to: e.to.cell,
            target: e.target,
            progressed: e.task.is_some() && e.outcome == StepOutcome::Ok,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureFlag {
    pub kind: FailureKind,
    pub agent: AgentId,
    /// Env steps of the first and last flagged action.
    pub window: (u64, u64),
    /// Indices of the first and last flagged action in the agent's trace.
    pub actions: (usize, usize),
}

/// Per-agent action traces in log order.
pub fn traces(log: &EpisodeLog) -> BTreeMap<AgentId, Vec<TraceStep>> {
    let mut out: BTreeMap<AgentId, Vec<TraceStep>> = BTreeMap::new();
    if let Some(h) = log.header() {
        for a in &h.agents {
            out.entry(a.id).or_default();
        }
    }
    for (r, e) in log.steps() {
        out.entry(e.agent).or_default().push(TraceStep::from_event(r.step, e));
    }
    out
}

fn window_start(j: usize, w: usize) -> usize {
    (j + 1).saturating_sub(w)
}

fn stationary(trace: &[TraceStep], lo: usize, hi: usize) -> bool {
    let c = trace[lo].from;
    trace[lo..=hi].iter().all(|s| s.from == c && s.to == c)
}

fn is_forward_back(a: Action) -> bool {
    matches!(a, Action::MoveForward | Action::MoveBackward)
}

fn is_strafe(a: Action) -> bool {
    matches!(a, Action::StrafeLeft | Action::StrafeRight)
}

/// Runs of identical actions as `(start index, action, length)`.
fn runs(trace: &[TraceStep], lo: usize, hi: usize) -> Vec<(usize, Action, usize)> {
    let mut out: Vec<(usize, Action, usize)> = Vec::new();
    for (i, s) in trace.iter().enumerate().take(hi + 1).skip(lo) {
        match out.last_mut() {
            Some((_, a, n)) if *a == s.action => *n += 1,
            _ => out.push((i, s.action, 1)),
        }
    }
    out
}

fn detect_door_toggle(trace: &[TraceStep], t: Threshold) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if !trace[j].action.is_door() {
            continue;
        }
        let door = trace[j].target;
        let lo = window_start(j, t.window);
        let hits: Vec<usize> =
            (lo..=j).filter(|&i| trace[i].action.is_door() && trace[i].target == door && door.is_some()).collect();
        if hits.len() >= t.count {
            out.push((hits[0], j));
        }
    }
    out
}

fn detect_door_spam(trace: &[TraceStep], t: Threshold) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if !trace[j].action.is_door() {
            continue;
        }
        let lo = window_start(j, t.window);
        let hits: Vec<usize> = (lo..=j).filter(|&i| trace[i].action.is_door()).collect();
        if hits.len() >= t.count && stationary(trace, hits[0], j) {
            out.push((hits[0], j));
        }
    }
    out
}

fn detect_ping_pong(trace: &[TraceStep], t: Threshold, max_positions: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if trace[j].from == trace[j].to {
            continue;
        }
        let lo = window_start(j, t.window);
        let mut seen = BTreeSet::from([trace[lo].from]);
        let mut returns = 0;
        let mut first_return = None;
        for (i, s) in trace.iter().enumerate().take(j + 1).skip(lo) {
            if s.from != s.to
                && !seen.insert(s.to) {
                    returns += 1;
                    first_return.get_or_insert(i);
                }
        }
        if seen.len() <= max_positions && returns >= t.count {
            out.push((lo, j));
        }
    }
    out
}

fn detect_backtrack(trace: &[TraceStep], t: Threshold, family: fn(Action) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if !family(trace[j].action) {
            continue;
        }
        let lo = window_start(j, t.window);
        let rs = runs(trace, lo, j);
        let mut first = None;
        let mut pairs = 0;
        for w in rs.windows(2) {
            let ((s0, a0, n0), (_, a1, n1)) = (w[0], w[1]);
            if family(a0) && family(a1) && a0 != a1 && n0.max(n1) >= 2 {
                pairs += 1;
                first.get_or_insert(s0);
            }
        }
        if pairs >= t.count {
            out.push((first.expect("pairs > 0"), j));
        }
    }
    out
}

fn detect_oscillation(trace: &[TraceStep], t: Threshold, family: fn(Action) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if !family(trace[j].action) {
            continue;
        }
        // Longest alternating chain ending at j, inside the window.
        let lo = window_start(j, t.window);
        let mut start = j;
        while start > lo && family(trace[start - 1].action) && trace[start - 1].action != trace[start].action {
            start -= 1;
        }
        if j + 1 - start >= t.count {
            out.push((start, j));
        }
    }
    out
}

fn detect_turn_toggle(trace: &[TraceStep], t: Threshold) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..trace.len() {
        if !trace[j].action.is_turn() {
            continue;
        }
        let lo = window_start(j, t.window);
        let turns: Vec<usize> = (lo..=j).filter(|&i| trace[i].action.is_turn()).collect();
        if turns.len() >= t.count && stationary(trace, turns[0], j) {
            out.push((turns[0], j));
        }
    }
    out
}

fn detect_streak(trace: &[TraceStep], min: usize, pred: impl Fn(&TraceStep) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, s) in trace.iter().enumerate() {
        if pred(s) {
            let st = *start.get_or_insert(i);
            if i + 1 - st >= min {
                out.push((st, i));
            }
        } else {
            start = None;
        }
    }
    out
}

fn merge(mut spans: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    spans.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (lo, hi) in spans {
        match out.last_mut() {
            Some((_, end)) if lo <= *end => *end = (*end).max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Flags for one agent's trace, ordered by kind then position.
pub fn detect_trace(agent: AgentId, trace: &[TraceStep], p: &DetectorParams) -> Vec<FailureFlag> {
    let mut flags = Vec::new();
    for kind in FailureKind::ALL {
        let spans = match kind {
            FailureKind::DoorToggle => detect_door_toggle(trace, p.door_toggle),
            FailureKind::DoorSpam => detect_door_spam(trace, p.door_spam),
            FailureKind::PositionPingPong => detect_ping_pong(trace, p.ping_pong, p.ping_pong_positions),
            FailureKind::MoveBacktrackLoop => detect_backtrack(trace, p.move_backtrack, is_forward_back),
            FailureKind::StrafeBacktrackLoop => detect_backtrack(trace, p.strafe_backtrack, is_strafe),
            FailureKind::MoveOscillation => detect_oscillation(trace, p.move_oscillation, is_forward_back),
            FailureKind::StrafeOscillation => detect_oscillation(trace, p.strafe_oscillation, is_strafe),
            FailureKind::TurnToggle => detect_turn_toggle(trace, p.turn_toggle),
            FailureKind::StallNoop => detect_streak(trace, p.stall_noop, |s| s.action == Action::Noop),
            FailureKind::TaskFixation => {
                detect_streak(trace, p.task_fixation, |s| s.action == Action::DoTask && !s.progressed)
            }
        };
        for (lo, hi) in merge(spans) {
            flags.push(FailureFlag { kind, agent, window: (trace[lo].step, trace[hi].step), actions: (lo, hi) });
        }
    }
    flags
}

pub fn detect_failures(log: &EpisodeLog, params: &DetectorParams) -> Vec<FailureFlag> {
    traces(log).iter().flat_map(|(&agent, trace)| detect_trace(agent, trace, params)).collect()
}

/// Per kind, the share of all agent actions covered by a flag of that kind.
pub fn failure_step_fraction(log: &EpisodeLog, flags: &[FailureFlag]) -> BTreeMap<FailureKind, f64> {
    let total = log.steps().count();
    let mut covered: BTreeMap<FailureKind, BTreeSet<(AgentId, usize)>> = BTreeMap::new();
    for f in flags {
        let set = covered.entry(f.kind).or_default();
        for i in f.actions.0..=f.actions.1 {
            set.insert((f.agent, i));
        }
    }
    FailureKind::ALL
        .into_iter()
        .map(|k| {
            let n = covered.get(&k).map_or(0, BTreeSet::len);
            (k, if total == 0 { 0.0 } else { n as f64 / total as f64 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VoteReasonClass {
    StrongEvidence,
    EvidenceScarcity,
    WeakHeuristics,
    Other,
}

impl VoteReasonClass {
    pub const ALL: [VoteReasonClass; 4] = [
        VoteReasonClass::StrongEvidence,
        VoteReasonClass::EvidenceScarcity,
        VoteReasonClass::WeakHeuristics,
        VoteReasonClass::Other,
    ];
}

struct Patterns {
    strong: Vec<(&'static str, Regex)>,
    scarcity: Vec<(&'static str, Regex)>,
    weak: Vec<(&'static str, Regex)>,
}

fn compile(list: &[(&'static str, &str)]) -> Vec<(&'static str, Regex)> {
    list.iter().map(|(name, re)| (*name, Regex::new(&format!("(?i){re}")).expect("valid pattern"))).collect()
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        strong: compile(&[("kill", r"\bkill"), ("vent", r"\bvent"), ("saw", r"\bsaw\b"), ("witness", r"witness")]),
        scarcity: compile(&[
            ("arbitrary", r"arbitrar"),
            ("equal trust", r"(equal|tied).{0,30}trust"),
            ("no evidence", r"\bno\b.{0,30}evidence"),
        ]),
        weak: compile(&[
            ("stationary", r"stationary"),
            ("loop", r"\bloop"),
            ("oscillation", r"oscillat"),
            ("erratic", r"erratic"),
            ("near body", r"near.{0,20}bod"),
            ("movement pattern", r"movement pattern"),
        ]),
    })
}

/// Keyword class of a vote's reasoning text; precedence Strong >
/// Scarcity > Weak > Other.
pub fn classify_reason(thought: &str) -> VoteReasonClass {
    let p = patterns();
    let any = |list: &[(&str, Regex)]| list.iter().any(|(_, re)| re.is_match(thought));
    if any(&p.strong) {
        VoteReasonClass::StrongEvidence
    } else if any(&p.scarcity) {
        VoteReasonClass::EvidenceScarcity
    } else if any(&p.weak) {
        VoteReasonClass::WeakHeuristics
    } else {
        VoteReasonClass::Other
    }
}

/// Every keyword group name with its pattern, for keyword tables.
pub fn keyword_patterns() -> Vec<(&'static str, &'static Regex)> {
    let p = patterns();
    p.strong.iter().chain(&p.scarcity).chain(&p.weak).map(|(n, r)| (*n, r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteClassification {
    pub class: VoteReasonClass,
    /// Impostor voted a crewmate while trusting every fellow impostor at
    /// 0.7 or more.
    pub misdirection: bool,
    /// Crewmate gave trust of 0.7 or more to at least one impostor.
    pub over_trust: bool,
}

pub const HIGH_TRUST: f64 = 0.7;

pub fn classify_vote(vote: &VoteRecord, roles: &BTreeMap<AgentId, Role>) -> VoteClassification {
    let role = roles.get(&vote.voter).copied();
    let is_imp = |id: &AgentId| roles.get(id) == Some(&Role::Impostor);
    let misdirection = role == Some(Role::Impostor) && {
        let mates: Vec<f64> =
            vote.trust_scores.iter().filter(|(id, _)| is_imp(id) && **id != vote.voter).map(|(_, &t)| t).collect();
        let votes_crew = matches!(vote.target, VoteTarget::Player(t) if roles.get(&t) == Some(&Role::Crewmate));
        votes_crew && !mates.is_empty() && mates.iter().all(|&t| t >= HIGH_TRUST)
    };
    let over_trust =
        role == Some(Role::Crewmate) && vote.trust_scores.iter().any(|(id, &t)| is_imp(id) && t >= HIGH_TRUST);
    VoteClassification { class: classify_reason(&vote.thought), misdirection, over_trust }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub votes: u32,
    pub share: f64,
    pub hits: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordStats {
    pub keyword: String,
    pub present: u32,
    pub accuracy_present: Option<f64>,
    pub accuracy_absent: Option<f64>,
    /// present minus absent accuracy.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReasonTable {
    /// Set when the corpus holds no non-skip crewmate vote.
    pub no_data: bool,
    pub crew_votes: u32,
    pub overall_accuracy: Option<f64>,
    pub classes: BTreeMap<VoteReasonClass, ClassStats>,
    pub keywords: Vec<KeywordStats>,
    pub over_trust: ClassStats,
    pub impostor_votes: u32,
    pub misdirection: u32,
    pub misdirection_share: Option<f64>,
}

/// Share and accuracy of non-skip crewmate votes per reasoning class and
/// per keyword, plus impostor misdirection counts.
pub fn reason_accuracy_table(logs: &[EpisodeLog]) -> ReasonTable {
    let mut crew: Vec<(String, bool, VoteClassification)> = Vec::new();
    let mut imp_votes = 0u32;
    let mut misdirection = 0u32;
    for log in logs {
        let Some(header) = log.header() else {
            continue;
        };
        let roles = header.roles();
        for (_, round) in log.vote_rounds() {
            for v in &round.votes {
                let VoteTarget::Player(t) = v.target else {
                    continue;
                };
                let c = classify_vote(v, &roles);
                match roles.get(&v.voter) {
                    Some(Role::Crewmate) => crew.push((v.thought.clone(), roles.get(&t) == Some(&Role::Impostor), c)),
                    Some(Role::Impostor) => {
                        imp_votes += 1;
                        misdirection += c.misdirection as u32;
                    }
                    None => {}
                }
            }
        }
    }
    let n = crew.len() as u32;
    let stats = |sel: &dyn Fn(&(String, bool, VoteClassification)) -> bool| {
        let picked: Vec<_> = crew.iter().filter(|v| sel(v)).collect();
        let votes = picked.len() as u32;
        let hits = picked.iter().filter(|v| v.1).count() as u32;
        ClassStats {
            votes,
            share: if n == 0 { 0.0 } else { votes as f64 / n as f64 },
            hits,
            accuracy: if votes == 0 { 0.0 } else { hits as f64 / votes as f64 },
        }
    };
    let classes = if n == 0 {
        BTreeMap::new()
    } else {
        VoteReasonClass::ALL.into_iter().map(|k| (k, stats(&|v| v.2.class == k))).collect()
    };
    let keywords = if n == 0 {
        Vec::new()
    } else {
        keyword_patterns()
            .into_iter()
            .map(|(name, re)| {
                let with = stats(&|v| re.is_match(&v.0));
                let without = stats(&|v| !re.is_match(&v.0));
                let acc = |s: ClassStats| (s.votes > 0).then_some(s.accuracy);
                KeywordStats {
                    keyword: name.to_string(),
                    present: with.votes,
                    accuracy_present: acc(with),
                    accuracy_absent: acc(without),
                    delta: acc(with).zip(acc(without)).map(|(a, b)| a - b),
                }
            })
            .collect()
    };
    ReasonTable {
        no_data: n == 0,
        crew_votes: n,
        overall_accuracy: (n > 0).then(|| crew.iter().filter(|v| v.1).count() as f64 / n as f64),
        classes,
        keywords,
        over_trust: stats(&|v| v.2.over_trust),
        impostor_votes: imp_votes,
        misdirection,
        misdirection_share: (imp_votes > 0).then(|| misdirection as f64 / imp_votes as f64),
    }
}
