//! Episode event stream. Each record serializes to one JSON line of the form
//! `{"step":..,"macro_step":..,"kind":..,"payload":{..}}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{Action, AgentId, Role};
use crate::engine::{EngineConfig, GameOutcome, MeetingTrigger, VoteRecord};
use crate::reward::RewardEvent;
use crate::world::{Cell, MapSnapshot, Pose};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub macro_step: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Header(Header),
    Step(StepEvent),
    Kill(KillEvent),
    Report(ReportEvent),
    VoteRound(VoteRound),
    Ejection(Ejection),
    Reward(RewardEvent),
    Violation(Violation),
    Termination(GameOutcome),
    Footer(Footer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: AgentId,
    pub role: Role,
    pub pose: Pose,
    pub tasks: Vec<String>,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub seed: u64,
    pub config: EngineConfig,
    pub map: MapSnapshot,
    pub agents: Vec<AgentInfo>,
}

impl Header {
    pub fn role_of(&self, id: AgentId) -> Option<Role> {
        self.agents.iter().find(|a| a.id == id).map(|a| a.role)
    }

    pub fn roles(&self) -> BTreeMap<AgentId, Role> {
        self.agents.iter().map(|a| (a.id, a.role)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Ok,
    /// Move into a blocked or occupied cell; the agent stayed put.
    Blocked,
    /// Interaction with nothing to act on.
    Failed,
    /// Impostor DO_TASK on a station: logged, no state change.
    FakeTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub station: String,
    pub progress: u32,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoorChange {
    pub position: Cell,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub agent: AgentId,
    /// Raw code the agent asked for, before coercion.
    pub action: u8,
    pub executed: Action,
    pub from: Pose,
    pub to: Pose,
    pub outcome: StepOutcome,
    /// Faced cell for interaction actions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskProgress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub door: Option<DoorChange>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub thought: String,
}

impl StepEvent {
    /// The requested action when it was a valid code.
    pub fn requested(&self) -> Option<Action> {
        Action::from_code(self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillEvent {
    pub killer: AgentId,
    pub victim: AgentId,
    pub position: Cell,
    pub witnesses: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub agent: AgentId,
    pub trigger: MeetingTrigger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpse: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRound {
    pub phase: u32,
    pub trigger: MeetingTrigger,
    /// Living players at the start of the round, ascending.
    pub alive: Vec<AgentId>,
    pub votes: Vec<VoteRecord>,
    pub tally: BTreeMap<AgentId, u32>,
    pub skips: u32,
    pub ejected: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ejection {
    pub agent: AgentId,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    #[serde(rename = "E_CONNECT")]
    Connect,
    #[serde(rename = "E_TIMEOUT")]
    Timeout,
    #[serde(rename = "E_MALFORMED")]
    Malformed,
    #[serde(rename = "E_ILLEGAL_ACTION")]
    IllegalAction,
    #[serde(rename = "E_INVALID_VOTE")]
    InvalidVote,
    #[serde(rename = "E_MISSING_TRUST")]
    MissingTrust,
    #[serde(rename = "E_MISSING_DECISION")]
    MissingDecision,
    #[serde(rename = "E_DEAD_AGENT")]
    DeadAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub agent: AgentId,
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footer {
    pub macro_steps: u64,
    pub env_steps: u64,
    pub records: usize,
}

/// A complete or partial episode as an ordered list of records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

/// Result of parsing JSONL text: the readable records plus how many lines
/// were skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub log: EpisodeLog,
    pub skipped: usize,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    /// Lenient parse: blank lines are ignored, unreadable lines are counted.
    pub fn parse(text: &str) -> ParsedLog {
        let mut parsed = ParsedLog::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogRecord>(line) {
                Ok(r) => parsed.log.records.push(r),
                Err(_) => parsed.skipped += 1,
            }
        }
        parsed
    }

    pub fn header(&self) -> Option<&Header> {
        self.records.iter().find_map(|r| match &r.event {
            Event::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<&GameOutcome> {
        self.records.iter().find_map(|r| match &r.event {
            Event::Termination(o) => Some(o),
            _ => None,
        })
    }

    pub fn footer(&self) -> Option<&Footer> {
        self.records.iter().find_map(|r| match &r.event {
            Event::Footer(f) => Some(f),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = (&LogRecord, &StepEvent)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Step(s) => Some((r, s)),
            _ => None,
        })
    }

    pub fn steps_of(&self, agent: AgentId) -> impl Iterator<Item = (&LogRecord, &StepEvent)> {
        self.steps().filter(move |(_, s)| s.agent == agent)
    }

    pub fn kills(&self) -> impl Iterator<Item = (&LogRecord, &KillEvent)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Kill(k) => Some((r, k)),
            _ => None,
        })
    }

    pub fn vote_rounds(&self) -> impl Iterator<Item = (&LogRecord, &VoteRound)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::VoteRound(v) => Some((r, v)),
            _ => None,
        })
    }

    pub fn rewards(&self) -> impl Iterator<Item = &RewardEvent> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Reward(e) => Some(e),
            _ => None,
        })
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Violation(v) => Some(v),
            _ => None,
        })
    }

    /// Sum of reward amounts per agent.
    pub fn reward_totals(&self) -> BTreeMap<AgentId, f64> {
        let mut out = BTreeMap::new();
        for e in self.rewards() {
            *out.entry(e.agent).or_insert(0.0) += e.amount;
        }
        out
    }

    /// Env step at which an agent died (killed or ejected), if it did.
    pub fn death_step(&self, agent: AgentId) -> Option<u64> {
        self.records.iter().find_map(|r| match &r.event {
            Event::Kill(k) if k.victim == agent => Some(r.step),
            Event::Ejection(e) if e.agent == agent => Some(r.step),
            _ => None,
        })
    }
}
