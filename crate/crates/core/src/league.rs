//! Head-to-head league: matchup scheduling, Elo ratings, win-rate matrices,
//! and the win-lean trajectory.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{AgentId, Role, Team};
use crate::engine::{EngineConfig, GameOutcome, VoteTarget};
use crate::log::{Event, EpisodeLog, ViolationCode};
use crate::oracle::OracleLevel;
use crate::runner::{run_generated, Bindings, EpisodeSpec};
use crate::seed;
use crate::world::MapConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LeagueError {
    #[error("a league needs at least one policy")]
    NoPolicies,
    #[error("no scored episodes")]
    NoResults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    pub map: MapConfig,
}

/// Shared episode settings for every matchup.
#[derive(Debug, Clone, PartialEq)]
pub struct LeagueSpec {
    pub policies: Vec<String>,
    pub patterns: Vec<Pattern>,
    pub episodes_per_matchup: usize,
    pub seed: u64,
    pub engine: EngineConfig,
    pub crew: usize,
    pub impostors: usize,
    pub oracle_level: OracleLevel,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    /// `None` when the episode failed and is excluded from ratings.
    pub outcome: Option<GameOutcome>,
    pub error: Option<String>,
    pub log: Option<EpisodeLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matchup {
    pub crew_policy: String,
    pub impostor_policy: String,
    pub pattern: String,
    pub results: Vec<EpisodeResult>,
}

impl Matchup {
    pub fn is_self_play(&self) -> bool {
        self.crew_policy == self.impostor_policy
    }

    pub fn scored(&self) -> impl Iterator<Item = &GameOutcome> {
        self.results.iter().filter_map(|r| r.outcome.as_ref())
    }

    pub fn crew_wins(&self) -> usize {
        self.scored().filter(|o| o.winner == Team::Crew).count()
    }
}

/// Ordered (crew, impostor) pairs including self-play, per pattern.
pub fn schedule(policies: &[String], patterns: &[Pattern]) -> Vec<(String, String, usize)> {
    let mut out = Vec::new();
    for (pi, _) in patterns.iter().enumerate() {
        for crew in policies {
            for imp in policies {
                out.push((crew.clone(), imp.clone(), pi));
            }
        }
    }
    out
}

fn endpoint_failure(log: &EpisodeLog) -> Option<String> {
    log.violations()
        .find(|v| matches!(v.code, ViolationCode::Connect | ViolationCode::Timeout))
        .map(|v| format!("{}: {}", v.agent, v.detail))
}

fn episode_seed(seed: u64, crew: &str, imp: &str, pattern: &str, episode: usize) -> u64 {
    seed::derive_indexed(seed::derive(seed, &format!("league/{pattern}/{crew}/{imp}")), "episode", episode as u64)
}

/// Plays every matchup. Matchups and episodes run in parallel; results come
/// back in schedule order.
pub fn run_league(spec: &LeagueSpec) -> Result<Vec<Matchup>, LeagueError> {
    if spec.policies.is_empty() {
        return Err(LeagueError::NoPolicies);
    }
    let jobs: Vec<(usize, usize)> = (0..schedule(&spec.policies, &spec.patterns).len())
        .flat_map(|m| (0..spec.episodes_per_matchup).map(move |e| (m, e)))
        .collect();
    let sched = schedule(&spec.policies, &spec.patterns);
    let results: Vec<EpisodeResult> = jobs
        .par_iter()
        .map(|&(m, e)| {
            let (crew, imp, pi) = &sched[m];
            let pattern = &spec.patterns[*pi];
            let seed = episode_seed(spec.seed, crew, imp, &pattern.name, e);
            let ep = EpisodeSpec {
                engine: spec.engine.clone(),
                map: pattern.map.clone(),
                crew: spec.crew,
                impostors: spec.impostors,
                oracle_level: spec.oracle_level,
                seed,
            };
            let bindings = Bindings {
                crew: crew.clone(),
                impostor: imp.clone(),
                overrides: BTreeMap::new(),
                timeout: spec.timeout,
            };
            match run_generated(&ep, &bindings) {
                Ok(log) => {
                    let error = endpoint_failure(&log);
                    let outcome = if error.is_none() { log.outcome().copied() } else { None };
                    EpisodeResult { seed, outcome, error, log: Some(log) }
                }
                Err(e) => EpisodeResult { seed, outcome: None, error: Some(e.to_string()), log: None },
            }
        })
        .collect();
    let mut results = results.into_iter();
    Ok(sched
        .into_iter()
        .map(|(crew, imp, pi)| Matchup {
            crew_policy: crew,
            impostor_policy: imp,
            pattern: spec.patterns[pi].name.clone(),
            results: results.by_ref().take(spec.episodes_per_matchup).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EloParams {
    pub k: f64,
    pub base: f64,
    pub iterations: usize,
}

impl Default for EloParams {
    fn default() -> Self {
        Self { k: 64.0, base: 1500.0, iterations: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloGame {
    pub crew: String,
    pub impostor: String,
    pub crew_won: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub params: EloParams,
    pub ratings: BTreeMap<String, f64>,
}

pub fn expected_score(r_self: f64, r_opp: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_opp - r_self) / 400.0))
}

/// Applies one game; returns the crew-side rating change.
pub fn elo_update(ratings: &mut BTreeMap<String, f64>, game: &EloGame, k: f64) -> f64 {
    let rc = ratings[&game.crew];
    let ri = ratings[&game.impostor];
    let s = if game.crew_won { 1.0 } else { 0.0 };
    let delta = k * (s - expected_score(rc, ri));
    *ratings.get_mut(&game.crew).expect("rated") += delta;
    *ratings.get_mut(&game.impostor).expect("rated") -= delta;
    delta
}

/// Iterates the game list `params.iterations` times, each pass in an order
/// shuffled by `seed`. Self-play games are skipped.
pub fn compute_elo(policies: &[String], games: &[EloGame], params: EloParams, seed: u64) -> Result<EloTable, LeagueError> {
    if games.is_empty() {
        return Err(LeagueError::NoResults);
    }
    let mut ratings: BTreeMap<String, f64> = policies.iter().map(|p| (p.clone(), params.base)).collect();
    for g in games {
        ratings.entry(g.crew.clone()).or_insert(params.base);
        ratings.entry(g.impostor.clone()).or_insert(params.base);
    }
    let rated: Vec<&EloGame> = games.iter().filter(|g| g.crew != g.impostor).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "elo"));
    for _ in 0..params.iterations {
        let mut order = rated.clone();
        order.shuffle(&mut rng);
        for g in order {
            elo_update(&mut ratings, g, params.k);
        }
    }
    Ok(EloTable { params, ratings })
}

pub fn elo_games<'a>(matchups: impl IntoIterator<Item = &'a Matchup>) -> Vec<EloGame> {
    matchups
        .into_iter()
        .flat_map(|m| {
            m.scored().map(|o| EloGame {
                crew: m.crew_policy.clone(),
                impostor: m.impostor_policy.clone(),
                crew_won: o.winner == Team::Crew,
            })
        })
        .collect()
}

/// Elo per map pattern, keyed by pattern name.
pub fn elo_by_pattern(
    policies: &[String],
    matchups: &[Matchup],
    params: EloParams,
    seed: u64,
) -> BTreeMap<String, Result<EloTable, LeagueError>> {
    let patterns: BTreeSet<&str> = matchups.iter().map(|m| m.pattern.as_str()).collect();
    patterns
        .into_iter()
        .map(|p| {
            let games = elo_games(matchups.iter().filter(|m| m.pattern == p));
            (p.to_string(), compute_elo(policies, &games, params, seed::derive(seed, p)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standing {
    pub rank: usize,
    pub policy: String,
    pub elo: f64,
    pub crew_win_rate: Option<f64>,
    pub impostor_win_rate: Option<f64>,
}

fn rate(wins: usize, games: usize) -> Option<f64> {
    (games > 0).then(|| wins as f64 / games as f64)
}

/// Table rows sorted by rating; win rates exclude self-play.
pub fn standings(table: &EloTable, matchups: &[Matchup]) -> Vec<Standing> {
    let mut rows: Vec<Standing> = table
        .ratings
        .iter()
        .map(|(p, &elo)| {
            let (mut cw, mut cn, mut iw, mut inn) = (0, 0, 0, 0);
            for m in matchups.iter().filter(|m| !m.is_self_play()) {
                let n = m.scored().count();
                if &m.crew_policy == p {
                    cw += m.crew_wins();
                    cn += n;
                }
                if &m.impostor_policy == p {
                    iw += n - m.crew_wins();
                    inn += n;
                }
            }
            Standing { rank: 0, policy: p.clone(), elo, crew_win_rate: rate(cw, cn), impostor_win_rate: rate(iw, inn) }
        })
        .collect();
    rows.sort_by(|a, b| b.elo.total_cmp(&a.elo).then_with(|| a.policy.cmp(&b.policy)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

/// Row = crew-side policy, column = impostor-side policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrices {
    pub policies: Vec<String>,
    /// Crew win rate of the row policy; diagonal fixed at 0.5.
    pub overall: Vec<Vec<Option<f64>>>,
    /// Impostor win rate in the same matchup.
    pub impostor: Vec<Vec<Option<f64>>>,
}

pub fn win_matrices(policies: &[String], matchups: &[Matchup]) -> WinMatrices {
    let n = policies.len();
    let idx: BTreeMap<&str, usize> = policies.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut wins = vec![vec![0usize; n]; n];
    let mut games = vec![vec![0usize; n]; n];
    for m in matchups {
        let (Some(&r), Some(&c)) = (idx.get(m.crew_policy.as_str()), idx.get(m.impostor_policy.as_str())) else {
            continue;
        };
        wins[r][c] += m.crew_wins();
        games[r][c] += m.scored().count();
    }
    let cell = |r: usize, c: usize| rate(wins[r][c], games[r][c]);
    WinMatrices {
        policies: policies.to_vec(),
        overall: (0..n).map(|r| (0..n).map(|c| if r == c { Some(0.5) } else { cell(r, c) }).collect()).collect(),
        impostor: (0..n).map(|r| (0..n).map(|c| cell(r, c).map(|w| 1.0 - w)).collect()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WinLeanParams {
    pub w_task: f64,
    pub w_alive: f64,
    pub w_detect: f64,
    pub alpha: f64,
}

impl Default for WinLeanParams {
    fn default() -> Self {
        Self { w_task: 1.0, w_alive: 0.5, w_detect: 0.3, alpha: 2.0 }
    }
}

/// Inputs of the win-lean score at one trust snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeanInputs {
    pub task_completion: f64,
    pub crew_alive: u32,
    pub impostors_alive: u32,
    pub crew_initial: u32,
    pub detection: f64,
}

pub fn lean_score(x: &LeanInputs, p: &WinLeanParams) -> f64 {
    p.w_task * (x.task_completion - 0.5)
        + p.w_alive * (x.crew_alive as f64 - x.impostors_alive as f64) / x.crew_initial as f64
        + p.w_detect * (x.detection - 0.5)
}

pub fn lean_probability(s: f64, alpha: f64) -> f64 {
    0.5 * (1.0 + (alpha * s).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeanPoint {
    pub step: u64,
    pub inputs: LeanInputs,
    pub p_crew: f64,
}

/// Win-lean at every voting round of the episode.
pub fn win_lean_curve(log: &EpisodeLog, params: &WinLeanParams) -> Vec<LeanPoint> {
    let Some(header) = log.header() else {
        return Vec::new();
    };
    let roles = header.roles();
    let crew_initial = roles.values().filter(|&&r| r == Role::Crewmate).count() as u32;
    let required: BTreeMap<&str, u32> = header
        .map
        .stations
        .iter()
        .filter(|s| header.agents.iter().any(|a| a.role == Role::Crewmate && a.tasks.contains(&s.id)))
        .map(|s| (s.id.as_str(), s.required_toggles))
        .collect();
    let total_required: u32 = required.values().sum();
    let mut progress: BTreeMap<&str, u32> = BTreeMap::new();
    let mut det = 0.5;
    let mut out = Vec::new();
    for r in &log.records {
        match &r.event {
            Event::Step(e) => {
                if let Some(t) = &e.task {
                    if let Some(&req) = required.get(t.station.as_str()) {
                        progress.insert(t.station.as_str(), t.progress.min(req));
                    }
                }
            }
            Event::VoteRound(v) => {
                let alive_imps: BTreeSet<AgentId> =
                    v.alive.iter().copied().filter(|a| roles.get(a) == Some(&Role::Impostor)).collect();
                let trust: Vec<f64> = v
                    .votes
                    .iter()
                    .filter(|vote| roles.get(&vote.voter) == Some(&Role::Crewmate))
                    .flat_map(|vote| vote.trust_scores.iter().filter(|(t, _)| alive_imps.contains(t)).map(|(_, &x)| x))
                    .collect();
                if !trust.is_empty() {
                    det = 1.0 - trust.iter().sum::<f64>() / trust.len() as f64;
                }
                let done: u32 = progress.values().sum();
                let inputs = LeanInputs {
                    task_completion: if total_required == 0 { 0.0 } else { done as f64 / total_required as f64 },
                    crew_alive: v.alive.iter().filter(|a| roles.get(a) == Some(&Role::Crewmate)).count() as u32,
                    impostors_alive: alive_imps.len() as u32,
                    crew_initial,
                    detection: det,
                };
                out.push(LeanPoint { step: r.step, inputs, p_crew: lean_probability(lean_score(&inputs, params), params.alpha) });
            }
            _ => {}
        }
    }
    out
}

/// Curve values by voting-round index up to `horizon`. The unfilled
/// variant ends when the episode does; the filled one carries the
/// terminal outcome (1 for a crew win, 0 otherwise) from the end onward.
pub fn win_lean_trajectory(log: &EpisodeLog, params: &WinLeanParams, horizon: usize, filled: bool) -> Vec<Option<f64>> {
    let curve = win_lean_curve(log, params);
    let terminal = log.outcome().map(|o| if o.winner == Team::Crew { 1.0 } else { 0.0 });
    (0..horizon)
        .map(|k| match curve.get(k) {
            Some(p) => Some(p.p_crew),
            None if filled => terminal,
            None => None,
        })
        .collect()
}

/// Mean trajectory across episodes at each index, over episodes with a
/// value there. The horizon is one past the longest curve so every filled
/// trajectory ends on its outcome.
pub fn mean_trajectory(logs: &[EpisodeLog], params: &WinLeanParams, filled: bool) -> Vec<Option<f64>> {
    let horizon = logs.iter().map(|l| win_lean_curve(l, params).len()).max().unwrap_or(0) + 1;
    let all: Vec<Vec<Option<f64>>> = logs.iter().map(|l| win_lean_trajectory(l, params, horizon, filled)).collect();
    (0..horizon)
        .map(|k| {
            let vals: Vec<f64> = all.iter().filter_map(|t| t[k]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

/// Crew detection accuracy per (crew policy, impostor policy) cell.
pub fn detection_matrix(policies: &[String], matchups: &[Matchup]) -> Vec<Vec<Option<f64>>> {
    let n = policies.len();
    let idx: BTreeMap<&str, usize> = policies.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut hits = vec![vec![0usize; n]; n];
    let mut votes = vec![vec![0usize; n]; n];
    for m in matchups {
        let (Some(&r), Some(&c)) = (idx.get(m.crew_policy.as_str()), idx.get(m.impostor_policy.as_str())) else {
            continue;
        };
        for log in m.results.iter().filter(|e| e.outcome.is_some()).filter_map(|e| e.log.as_ref()) {
            let Some(h) = log.header() else { continue };
            let roles = h.roles();
            for (_, round) in log.vote_rounds() {
                for v in round.votes.iter().filter(|v| roles.get(&v.voter) == Some(&Role::Crewmate)) {
                    if let VoteTarget::Player(t) = v.target {
                        votes[r][c] += 1;
                        hits[r][c] += (roles.get(&t) == Some(&Role::Impostor)) as usize;
                    }
                }
            }
        }
    }
    (0..n).map(|r| (0..n).map(|c| rate(hits[r][c], votes[r][c])).collect()).collect()
}
