//! Policy interface and the scripted baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, AgentId, Role};
use crate::agents::observation::{Observation, VotingObservation};
use crate::engine::VoteTarget;
use crate::log::{KillEvent, ViolationCode};
use crate::oracle::TargetKind;

/// A movement reply. `action` is the raw code; the engine validates it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(default)]
    pub thought: String,
    pub action: u8,
}

impl Decision {
    pub fn new(action: Action, thought: impl Into<String>) -> Self {
        Self { thought: thought.into(), action: action.code() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDecision {
    #[serde(default)]
    pub thought: String,
    pub vote: VoteTarget,
    #[serde(default)]
    pub trust_scores: BTreeMap<AgentId, f64>,
}

/// Why an agent failed to produce a usable reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentFault {
    pub code: ViolationCode,
    pub detail: String,
}

impl AgentFault {
    pub fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Self { code, detail: detail.into() }
    }
}

impl fmt::Display for AgentFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.detail)
    }
}

pub trait Policy: Send {
    /// Label recorded in the episode header.
    fn label(&self) -> String;

    /// True for policies that block on I/O; the runner then collects
    /// decisions concurrently.
    fn is_remote(&self) -> bool {
        false
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, AgentFault>;

    fn vote(&mut self, obs: &VotingObservation) -> Result<VoteDecision, AgentFault>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mover {
    /// Uniform over the allowed actions.
    Random,
    /// Follows the planner toward the nearest primary target.
    Oracle,
    /// Like `Oracle`, but an impostor only kills without witnesses.
    Stealth,
    /// Always NOOP.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voter {
    /// Uniform over the allowed votes, constant 0.5 trust.
    Random,
    /// 0.5 priors lowered by 0.2 per witnessed kill; votes the unique
    /// minimum, skips on ties.
    LowestTrust,
    /// Always skip, constant 0.5 trust.
    Skip,
}

/// Builtin policy name, `mover` or `mover+voter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinSpec {
    pub mover: Mover,
    pub voter: Voter,
}

impl FromStr for BuiltinSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, v) = match s.split_once('+') {
            Some((m, v)) => (m, Some(v)),
            None => (s, None),
        };
        let mover = match m {
            "random" => Mover::Random,
            "oracle" => Mover::Oracle,
            "stealth" => Mover::Stealth,
            "idle" => Mover::Idle,
            other => return Err(format!("unknown mover {other:?}")),
        };
        let voter = match v {
            Some("random") => Voter::Random,
            Some("lowest-trust") => Voter::LowestTrust,
            Some("skip") => Voter::Skip,
            Some(other) => return Err(format!("unknown voter {other:?}")),
            None => match mover {
                Mover::Random => Voter::Random,
                Mover::Oracle | Mover::Stealth => Voter::LowestTrust,
                Mover::Idle => Voter::Skip,
            },
        };
        Ok(Self { mover, voter })
    }
}

impl fmt::Display for BuiltinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.mover {
            Mover::Random => "random",
            Mover::Oracle => "oracle",
            Mover::Stealth => "stealth",
            Mover::Idle => "idle",
        };
        let v = match self.voter {
            Voter::Random => "random",
            Voter::LowestTrust => "lowest-trust",
            Voter::Skip => "skip",
        };
        write!(f, "{m}+{v}")
    }
}

const MAX_WAIT: u32 = 3;

/// A scripted agent combining a mover and a voter.
pub struct ScriptedPolicy {
    spec: BuiltinSpec,
    rng: ChaCha8Rng,
    /// Kills seen so far, deduplicated by (killer, victim).
    seen_kills: BTreeSet<(AgentId, AgentId)>,
    suspicion: BTreeMap<AgentId, u32>,
    /// Consecutive steps spent waiting for a blocking player to clear.
    waited: u32,
}

impl ScriptedPolicy {
    pub fn new(spec: BuiltinSpec, seed: u64) -> Self {
        Self { spec, rng: ChaCha8Rng::seed_from_u64(seed), seen_kills: BTreeSet::new(), suspicion: BTreeMap::new(), waited: 0 }
    }

    fn note_kills(&mut self, kills: &[KillEvent]) {
        for k in kills {
            if self.seen_kills.insert((k.killer, k.victim)) {
                *self.suspicion.entry(k.killer).or_insert(0) += 1;
            }
        }
    }

    fn trust(&self, id: AgentId) -> f64 {
        let hits = self.suspicion.get(&id).copied().unwrap_or(0) as f64;
        (0.5 - 0.2 * hits).max(0.0)
    }

    fn random_of(&mut self, options: &[Action]) -> Action {
        options.choose(&mut self.rng).copied().unwrap_or(Action::Noop)
    }

    /// Random move or turn, used when the planner has nothing useful.
    fn wander(&mut self, obs: &Observation) -> Action {
        let moves: Vec<Action> = obs.allowed().iter().copied().filter(|a| a.is_move()).collect();
        if moves.is_empty() {
            let turns: Vec<Action> = obs.allowed().iter().copied().filter(|a| a.is_turn()).collect();
            self.random_of(&turns)
        } else {
            self.random_of(&moves)
        }
    }

    fn follow(&mut self, obs: &Observation, stealth: bool) -> (Action, String) {
        let me = &obs.self_info;
        if me.role == Role::Impostor && obs.allowed().contains(&Action::Kill) {
            let victim = me.cell.offset(me.direction.delta());
            let witnesses = obs
                .observation
                .view
                .visible_players
                .iter()
                .filter(|(id, c)| !me.teammates.contains(id) && **c != victim && c.manhattan(me.cell) <= 2)
                .count();
            if !stealth || witnesses == 0 {
                return (Action::Kill, format!("kill, {witnesses} witnesses"));
            }
        }
        let primary = match me.role {
            Role::Crewmate => TargetKind::Task,
            Role::Impostor => TargetKind::Player,
        };
        let target = obs
            .suggestions
            .values()
            .filter(|s| s.kind == primary)
            .min_by(|x, y| x.astar_distance.cmp(&y.astar_distance).then_with(|| x.target.cmp(&y.target)));
        let progress = target.filter(|s| s.best_next_action != Action::Noop && obs.allowed().contains(&s.best_next_action));
        // Right of way goes to the lowest id among adjacent players: it
        // waits briefly while the others step aside, so head-on meetings
        // in doorways and corridors clear.
        let adjacent = obs.observation.view.visible_players.iter().filter(|(_, c)| c.manhattan(me.cell) == 1);
        let nearest = adjacent.map(|(&id, _)| id).min();
        let waiting = target.is_some() && progress.is_none() && nearest.is_some_and(|b| me.name < b) && self.waited < MAX_WAIT;
        self.waited = if waiting { self.waited + 1 } else { 0 };
        match target {
            Some(s) if progress.is_some() => (s.best_next_action, format!("toward {} at {}", s.target, s.astar_distance)),
            Some(s) if waiting => (Action::Noop, format!("{} blocked, wait", s.target)),
            Some(s) => (self.wander(obs), format!("{} blocked, sidestep", s.target)),
            None => (self.wander(obs), "no target, explore".into()),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn label(&self) -> String {
        self.spec.to_string()
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, AgentFault> {
        self.note_kills(&obs.witnessed_kills);
        let (action, thought) = match self.spec.mover {
            Mover::Random => {
                let a = self.random_of(obs.allowed());
                (a, "random".to_string())
            }
            Mover::Oracle => self.follow(obs, false),
            Mover::Stealth => self.follow(obs, true),
            Mover::Idle => (Action::Noop, "idle".to_string()),
        };
        Ok(Decision::new(action, thought))
    }

    fn vote(&mut self, obs: &VotingObservation) -> Result<VoteDecision, AgentFault> {
        self.note_kills(&obs.witnessed_kills);
        let others: Vec<AgentId> = obs.alive_players.iter().copied().filter(|&id| id != obs.name).collect();
        let (vote, trust_scores, thought) = match self.spec.voter {
            Voter::Random => {
                let vote = obs.allowed_votes.choose(&mut self.rng).copied().unwrap_or(VoteTarget::Skip);
                (vote, others.iter().map(|&id| (id, 0.5)).collect(), "No evidence to distinguish, voting randomly.".into())
            }
            Voter::Skip => (VoteTarget::Skip, others.iter().map(|&id| (id, 0.5)).collect(), "No evidence, skip.".into()),
            Voter::LowestTrust => {
                let trust: BTreeMap<AgentId, f64> = others
                    .iter()
                    .filter(|id| !obs.teammates.contains(id))
                    .map(|&id| (id, self.trust(id)))
                    .chain(obs.teammates.iter().filter(|id| others.contains(id)).map(|&id| (id, 1.0)))
                    .collect();
                let low = trust.values().copied().fold(f64::INFINITY, f64::min);
                let lowest: Vec<AgentId> = trust.iter().filter(|(_, &t)| t == low).map(|(&id, _)| id).collect();
                if lowest.len() == 1 {
                    let t = lowest[0];
                    (VoteTarget::Player(t), trust, format!("I saw {t} kill; lowest trust."))
                } else {
                    (VoteTarget::Skip, trust, "Equal trust for everyone, skip.".into())
                }
            }
        };
        Ok(VoteDecision { thought, vote, trust_scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let s: BuiltinSpec = "oracle".parse().unwrap();
        assert_eq!(s, BuiltinSpec { mover: Mover::Oracle, voter: Voter::LowestTrust });
        let s: BuiltinSpec = "idle+random".parse().unwrap();
        assert_eq!(s.to_string(), "idle+random");
        assert!("teleport".parse::<BuiltinSpec>().is_err());
        assert!("random+coin".parse::<BuiltinSpec>().is_err());
    }
}
