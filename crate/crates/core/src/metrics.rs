//! Metric suite computed from episode logs alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{AgentId, Role};
use crate::engine::{GameOutcome, VoteTarget};
use crate::log::{EpisodeLog, Header};
use crate::oracle::optimal_completion_length;
use crate::world::{GridMap, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskWeighting {
    /// Each station's own weight (the completion reward of its kind).
    #[default]
    Reward,
    Equal,
}

/// Completion status of one assigned task as read from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub station: String,
    pub kind: TaskKind,
    pub weight: f64,
    pub reached: bool,
    /// Number of the agent's own actions up to and including the
    /// completing toggle.
    pub completed_after: Option<u64>,
    /// Shortest path plus toggles from the spawn pose on the initial map.
    pub optimal_length: Option<u32>,
}

/// Per-task view of a crewmate's episode.
pub fn task_records(log: &EpisodeLog, agent: AgentId) -> Vec<TaskRecord> {
    let Some(header) = log.header() else {
        return Vec::new();
    };
    let Some(info) = header.agents.iter().find(|a| a.id == agent) else {
        return Vec::new();
    };
    let map: Option<GridMap> = header.map.to_map().ok();
    let mut out: Vec<TaskRecord> = info
        .tasks
        .iter()
        .filter_map(|id| header.map.stations.iter().find(|s| &s.id == id))
        .map(|s| TaskRecord {
            station: s.id.clone(),
            kind: s.kind,
            weight: s.weight,
            reached: info.pose.front() == s.position,
            completed_after: None,
            optimal_length: map.as_ref().and_then(|m| optimal_completion_length(m, info.pose, s).ok()),
        })
        .collect();
    let positions: Vec<_> =
        out.iter().map(|t| header.map.stations.iter().find(|s| s.id == t.station).map(|s| s.position)).collect();
    let mut count = 0u64;
    for (_, step) in log.steps_of(agent) {
        count += 1;
        for (t, pos) in out.iter_mut().zip(&positions) {
            if Some(step.to.front()) == *pos {
                t.reached = true;
            }
        }
        if let Some(progress) = &step.task {
            if progress.complete {
                if let Some(t) = out.iter_mut().find(|t| t.station == progress.station && t.completed_after.is_none()) {
                    t.completed_after = Some(count);
                }
            }
        }
    }
    out
}

fn weight(t: &TaskRecord, w: TaskWeighting) -> f64 {
    match w {
        TaskWeighting::Reward => t.weight,
        TaskWeighting::Equal => 1.0,
    }
}

/// Weighted fraction of assigned tasks completed.
pub fn task_performance(log: &EpisodeLog, agent: AgentId, weighting: TaskWeighting) -> Option<f64> {
    let tasks = task_records(log, agent);
    let total: f64 = tasks.iter().map(|t| weight(t, weighting)).sum();
    if tasks.is_empty() || total <= 0.0 {
        return None;
    }
    let done: f64 = tasks.iter().filter(|t| t.completed_after.is_some()).map(|t| weight(t, weighting)).sum();
    Some(done / total)
}

/// Fraction of assigned tasks the agent stood in front of, facing, at
/// least once.
pub fn planning_success_rate(log: &EpisodeLog, agent: AgentId) -> Option<f64> {
    let tasks = task_records(log, agent);
    if tasks.is_empty() {
        return None;
    }
    Some(tasks.iter().filter(|t| t.reached).count() as f64 / tasks.len() as f64)
}

/// Planning efficiency of one completed task: optimal length over actions
/// taken since the episode started, capped at 1.
pub fn planning_efficiency(t: &TaskRecord) -> Option<f64> {
    let actual = t.completed_after?;
    let optimal = t.optimal_length?;
    Some((optimal as f64 / actual as f64).min(1.0))
}

/// Mean efficiency over completed tasks; 0 when none were completed.
pub fn planning_performance(log: &EpisodeLog, agent: AgentId) -> Option<f64> {
    let tasks = task_records(log, agent);
    if tasks.is_empty() {
        return None;
    }
    let pes: Vec<f64> = tasks.iter().filter_map(planning_efficiency).collect();
    if pes.is_empty() {
        Some(0.0)
    } else {
        Some(pes.iter().sum::<f64>() / pes.len() as f64)
    }
}

/// Trust series of `voter` toward `target`, one value per voting round in
/// which both were alive.
pub fn trust_series(log: &EpisodeLog, voter: AgentId, target: AgentId) -> Vec<f64> {
    log.vote_rounds()
        .filter_map(|(_, r)| r.votes.iter().find(|v| v.voter == voter).and_then(|v| v.trust_scores.get(&target)))
        .copied()
        .collect()
}

fn is_impostor(header: &Header, id: AgentId) -> f64 {
    if header.role_of(id) == Some(Role::Impostor) {
        1.0
    } else {
        0.0
    }
}

/// Mean squared error between distrust `1 - T` and the target's impostor
/// indicator.
pub fn trust_brier(log: &EpisodeLog, voter: AgentId, target: AgentId) -> Option<f64> {
    let header = log.header()?;
    let y = is_impostor(header, target);
    let series = trust_series(log, voter, target);
    if series.is_empty() {
        return None;
    }
    Some(series.iter().map(|t| ((1.0 - t) - y).powi(2)).sum::<f64>() / series.len() as f64)
}

/// Mean absolute change between consecutive trust values.
pub fn trust_volatility(log: &EpisodeLog, voter: AgentId, target: AgentId) -> Option<f64> {
    let series = trust_series(log, voter, target);
    if series.len() < 2 {
        return None;
    }
    let total: f64 = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Some(total / (series.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteCounts {
    pub total: u32,
    pub skips: u32,
    pub invalid: u32,
    pub non_skip: u32,
    pub hit_impostor: u32,
}

pub fn vote_counts(log: &EpisodeLog, agent: AgentId) -> VoteCounts {
    let mut c = VoteCounts::default();
    let Some(header) = log.header() else {
        return c;
    };
    for (_, round) in log.vote_rounds() {
        for v in round.votes.iter().filter(|v| v.voter == agent) {
            c.total += 1;
            if v.invalid {
                c.invalid += 1;
            }
            match v.target {
                VoteTarget::Skip => c.skips += 1,
                VoteTarget::Player(t) => {
                    c.non_skip += 1;
                    if header.role_of(t) == Some(Role::Impostor) {
                        c.hit_impostor += 1;
                    }
                }
            }
        }
    }
    c
}

/// Fraction of a crewmate's non-skip votes that targeted impostors.
pub fn detection_accuracy(log: &EpisodeLog, agent: AgentId) -> Option<f64> {
    if log.header()?.role_of(agent) != Some(Role::Crewmate) {
        return None;
    }
    let c = vote_counts(log, agent);
    (c.non_skip > 0).then(|| c.hit_impostor as f64 / c.non_skip as f64)
}

/// Chance accuracy of the crewmate's votes given who was alive at each
/// round: mean over non-skip votes of alive impostors / alive others.
pub fn dynamic_baseline(log: &EpisodeLog, agent: AgentId) -> Option<f64> {
    let header = log.header()?;
    if header.role_of(agent) != Some(Role::Crewmate) {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0u32;
    for (_, round) in log.vote_rounds() {
        for v in round.votes.iter().filter(|v| v.voter == agent && v.target != VoteTarget::Skip) {
            let others: Vec<_> = round.alive.iter().filter(|&&id| id != v.voter).collect();
            let imps = others.iter().filter(|&&&id| header.role_of(id) == Some(Role::Impostor)).count();
            sum += imps as f64 / others.len() as f64;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: AgentId,
    pub role: Role,
    pub policy: String,
    pub tp: Option<f64>,
    pub psr: Option<f64>,
    pub pp: Option<f64>,
    /// Mean Brier score over targets with at least one recorded score.
    pub brier: Option<f64>,
    /// Mean volatility over targets with at least two recorded scores.
    pub volatility: Option<f64>,
    pub da: Option<f64>,
    pub da_baseline: Option<f64>,
    pub votes: VoteCounts,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KindCompletion {
    pub assigned: u32,
    pub completed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub outcome: Option<GameOutcome>,
    pub macro_steps: u64,
    pub env_steps: u64,
    pub vote_rounds: u32,
    pub violations: u32,
    pub task_completion: BTreeMap<TaskKind, KindCompletion>,
    pub agents: Vec<AgentMetrics>,
}

pub fn episode_metrics(log: &EpisodeLog, weighting: TaskWeighting) -> Option<EpisodeMetrics> {
    let header = log.header()?;
    let rewards = log.reward_totals();
    let ids: Vec<AgentId> = header.agents.iter().map(|a| a.id).collect();
    let mut task_completion: BTreeMap<TaskKind, KindCompletion> = BTreeMap::new();
    let agents = header
        .agents
        .iter()
        .map(|info| {
            for t in task_records(log, info.id) {
                let e = task_completion.entry(t.kind).or_default();
                e.assigned += 1;
                e.completed += t.completed_after.is_some() as u32;
            }
            let targets = ids.iter().copied().filter(|&j| j != info.id);
            AgentMetrics {
                agent: info.id,
                role: info.role,
                policy: info.policy.clone(),
                tp: task_performance(log, info.id, weighting),
                psr: planning_success_rate(log, info.id),
                pp: planning_performance(log, info.id),
                brier: mean(targets.clone().filter_map(|j| trust_brier(log, info.id, j))),
                volatility: mean(targets.filter_map(|j| trust_volatility(log, info.id, j))),
                da: detection_accuracy(log, info.id),
                da_baseline: dynamic_baseline(log, info.id),
                votes: vote_counts(log, info.id),
                reward: rewards.get(&info.id).copied().unwrap_or(0.0),
            }
        })
        .collect();
    let last = log.records.last();
    Some(EpisodeMetrics {
        seed: header.seed,
        outcome: log.outcome().copied(),
        macro_steps: last.map_or(0, |r| r.macro_step),
        env_steps: last.map_or(0, |r| r.step),
        vote_rounds: log.vote_rounds().count() as u32,
        violations: log.violations().count() as u32,
        task_completion,
        agents,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoleAggregate {
    pub agents: u32,
    pub tp: Option<f64>,
    pub psr: Option<f64>,
    pub pp: Option<f64>,
    pub brier: Option<f64>,
    pub volatility: Option<f64>,
    pub da: Option<f64>,
    pub da_baseline: Option<f64>,
    pub reward: Option<f64>,
}

fn aggregate_role(episodes: &[EpisodeMetrics], role: Role) -> RoleAggregate {
    let agents: Vec<&AgentMetrics> = episodes.iter().flat_map(|e| &e.agents).filter(|a| a.role == role).collect();
    RoleAggregate {
        agents: agents.len() as u32,
        tp: mean(agents.iter().filter_map(|a| a.tp)),
        psr: mean(agents.iter().filter_map(|a| a.psr)),
        pp: mean(agents.iter().filter_map(|a| a.pp)),
        brier: mean(agents.iter().filter_map(|a| a.brier)),
        volatility: mean(agents.iter().filter_map(|a| a.volatility)),
        da: mean(agents.iter().filter_map(|a| a.da)),
        da_baseline: mean(agents.iter().filter_map(|a| a.da_baseline)),
        reward: mean(agents.iter().map(|a| a.reward)),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: u32,
    pub crew_wins: u32,
    pub impostor_wins: u32,
    pub causes: BTreeMap<String, u32>,
    pub mean_macro_steps: Option<f64>,
    pub crew: RoleAggregate,
    pub impostors: RoleAggregate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub weighting: TaskWeighting,
    pub aggregate: Aggregate,
    pub episodes: Vec<EpisodeMetrics>,
}

pub fn metrics_report(logs: &[EpisodeLog], weighting: TaskWeighting) -> MetricsReport {
    let episodes: Vec<EpisodeMetrics> = logs.iter().filter_map(|l| episode_metrics(l, weighting)).collect();
    let mut causes = BTreeMap::new();
    let mut crew_wins = 0;
    let mut impostor_wins = 0;
    for e in &episodes {
        if let Some(o) = e.outcome {
            *causes.entry(format!("{:?}", o.cause)).or_insert(0) += 1;
            match o.winner {
                crate::action::Team::Crew => crew_wins += 1,
                crate::action::Team::Impostors => impostor_wins += 1,
            }
        }
    }
    MetricsReport {
        weighting,
        aggregate: Aggregate {
            episodes: episodes.len() as u32,
            crew_wins,
            impostor_wins,
            causes,
            mean_macro_steps: mean(episodes.iter().map(|e| e.macro_steps as f64)),
            crew: aggregate_role(&episodes, Role::Crewmate),
            impostors: aggregate_role(&episodes, Role::Impostor),
        },
        episodes,
    }
}
