//! Game state machine: action resolution, macro-steps, meetings, voting,
//! termination, and reward emission. Every state change is appended to the
//! episode log held by [`GameState`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, AgentId, Role, Team};
use crate::log::{
    AgentInfo, DoorChange, Ejection, Event, Footer, Header, KillEvent, LogRecord, ReportEvent, StepEvent,
    StepOutcome, TaskProgress, Violation, ViolationCode, VoteRound, LOG_VERSION,
};
use crate::reward::{RewardEvent, RewardKind};
use crate::seed;
use crate::world::{generate_map, visible_cells, Cell, Direction, GridMap, MapConfig, Pose, TaskKind, TileKind, WorldError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("{0}")]
    Phase(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub vision_radius: u32,
    pub max_macro_steps: u64,
    pub env_steps_per_macro: u64,
    /// Scheduled meeting every this many env steps.
    pub voting_interval: u64,
    /// Env steps an impostor waits between kills, also applied at spawn.
    pub kill_cooldown: u64,
    /// Env steps between two meeting triggers by the same agent.
    pub trigger_cooldown: u64,
    pub history_len: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            vision_radius: 4,
            max_macro_steps: 500,
            env_steps_per_macro: 5,
            voting_interval: 200,
            kill_cooldown: 40,
            trigger_cooldown: 100,
            history_len: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Task,
    Voting,
    Over,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeetingTrigger {
    Scheduled,
    BodyReport,
    EmergencyButton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cause {
    AllImpostorsEjected,
    AllTasksComplete,
    AllCrewEliminated,
    ImpostorParity,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameOutcome {
    pub winner: Team,
    pub cause: Cause,
}

/// A ballot: a player or an explicit skip. Wire form `"Player_k"` / `"skip"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VoteTarget {
    Skip,
    Player(AgentId),
}

impl fmt::Display for VoteTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteTarget::Skip => f.write_str("skip"),
            VoteTarget::Player(id) => id.fmt(f),
        }
    }
}

impl FromStr for VoteTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("skip") {
            Ok(VoteTarget::Skip)
        } else {
            s.parse().map(VoteTarget::Player)
        }
    }
}

impl TryFrom<String> for VoteTarget {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<VoteTarget> for String {
    fn from(v: VoteTarget) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub voter: AgentId,
    pub target: VoteTarget,
    pub trust_scores: BTreeMap<AgentId, f64>,
    #[serde(default)]
    pub thought: String,
    #[serde(default)]
    pub phase_index: u32,
    /// Targets whose trust score was missing and set to 0.5.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub imputed: Vec<AgentId>,
    /// Set when the submitted target was dead, unknown, or the voter itself.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invalid: bool,
}

impl VoteRecord {
    pub fn skip(voter: AgentId) -> Self {
        Self {
            voter,
            target: VoteTarget::Skip,
            trust_scores: BTreeMap::new(),
            thought: String::new(),
            phase_index: 0,
            imputed: Vec::new(),
            invalid: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    pub from: Cell,
    pub action: Action,
    pub to: Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub pose: Pose,
    pub alive: bool,
    pub ejected: bool,
    pub kill_cooldown: u64,
    pub assigned_tasks: Vec<String>,
    pub history: VecDeque<HistoryEntry>,
    last_trigger: Option<u64>,
}

/// Initial condition of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub role: Role,
    pub pose: Pose,
    pub tasks: Vec<String>,
}

/// A decided action as submitted by a policy. `code` may be out of range;
/// the engine coerces it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Intent {
    pub code: u8,
    pub thought: String,
}

impl From<Action> for Intent {
    fn from(a: Action) -> Self {
        Self { code: a.code(), thought: String::new() }
    }
}

pub struct GameState {
    pub config: EngineConfig,
    pub seed: u64,
    pub map: GridMap,
    pub agents: Vec<AgentState>,
    pub env_step: u64,
    pub macro_step: u64,
    pub phase: Phase,
    pub pending_meeting: Option<MeetingTrigger>,
    pub vote_rounds: u32,
    pub outcome: Option<GameOutcome>,
    /// Env step and record of every kill so far.
    pub kills: Vec<(u64, KillEvent)>,
    pub log: Vec<LogRecord>,
    initial_map: GridMap,
    initial_crew: usize,
    initial_impostors: usize,
    rng: ChaCha8Rng,
}

impl GameState {
    /// Builds a game from explicit initial conditions.
    pub fn new(config: EngineConfig, map: GridMap, setups: Vec<AgentSetup>, seed: u64) -> Result<Self, EngineError> {
        if setups.is_empty() {
            return Err(EngineError::Setup("no players".into()));
        }
        if config.env_steps_per_macro == 0 || config.voting_interval == 0 {
            return Err(EngineError::Setup("env_steps_per_macro and voting_interval must be >= 1".into()));
        }
        let mut cells = BTreeSet::new();
        let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in setups.iter().enumerate() {
            if !matches!(map.tile(s.pose.cell), TileKind::Floor) || map.is_blocked(s.pose.cell) {
                return Err(EngineError::Setup(format!("Player_{i} spawns on a non-floor cell {}", s.pose.cell)));
            }
            if !cells.insert(s.pose.cell) {
                return Err(EngineError::Setup(format!("two players spawn on {}", s.pose.cell)));
            }
            if s.role == Role::Impostor && !s.tasks.is_empty() {
                return Err(EngineError::Setup(format!("impostor Player_{i} has tasks")));
            }
            for t in &s.tasks {
                if map.station(t).is_none() {
                    return Err(EngineError::Setup(format!("unknown station {t}")));
                }
                if owners.insert(t, i).is_some() {
                    return Err(EngineError::Setup(format!("station {t} assigned twice")));
                }
            }
        }
        let agents: Vec<AgentState> = setups
            .into_iter()
            .enumerate()
            .map(|(i, s)| AgentState {
                id: AgentId(i),
                role: s.role,
                pose: s.pose,
                alive: true,
                ejected: false,
                kill_cooldown: if s.role == Role::Impostor { config.kill_cooldown } else { 0 },
                assigned_tasks: s.tasks,
                history: VecDeque::new(),
                last_trigger: None,
            })
            .collect();
        let initial_crew = agents.iter().filter(|a| a.role == Role::Crewmate).count();
        Ok(Self {
            initial_impostors: agents.len() - initial_crew,
            initial_crew,
            initial_map: map.clone(),
            map,
            agents,
            config,
            seed,
            env_step: 0,
            macro_step: 0,
            phase: Phase::Task,
            pending_meeting: None,
            vote_rounds: 0,
            outcome: None,
            kills: Vec::new(),
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed::derive(seed, "engine")),
        })
    }

    /// Procedural setup: map, seeded role assignment, one station of each
    /// present kind per crewmate, and uniform spawn cells.
    pub fn generate(
        config: EngineConfig,
        map_config: &MapConfig,
        crew: usize,
        impostors: usize,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let n = crew + impostors;
        if n == 0 {
            return Err(EngineError::Setup("no players".into()));
        }
        // Every crewmate gets one station of each configured kind.
        let at_least = |k: u32| if k == 0 { 0 } else { k.max(crew as u32) };
        let map_config = MapConfig {
            common_tasks: at_least(map_config.common_tasks),
            short_tasks: at_least(map_config.short_tasks),
            long_tasks: at_least(map_config.long_tasks),
            ..map_config.clone()
        };
        let map = generate_map(&map_config, seed::derive(seed, "map"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "setup"));

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut roles = vec![Role::Crewmate; n];
        for &i in &order[..impostors] {
            roles[i] = Role::Impostor;
        }

        let crew_ids: Vec<usize> = (0..n).filter(|&i| roles[i] == Role::Crewmate).collect();
        let mut tasks = vec![Vec::new(); n];
        for kind in TaskKind::ALL {
            let mut ids: Vec<&str> =
                map.task_stations.iter().filter(|s| s.kind == kind).map(|s| s.id.as_str()).collect();
            if ids.is_empty() {
                continue;
            }
            if ids.len() < crew {
                return Err(EngineError::Setup(format!(
                    "{} {} stations for {crew} crewmates",
                    ids.len(),
                    kind.label()
                )));
            }
            ids.shuffle(&mut rng);
            for (&agent, id) in crew_ids.iter().zip(ids) {
                tasks[agent].push(id.to_string());
            }
        }

        let mut free: Vec<Cell> = map.cells().filter(|&c| map.tile(c) == TileKind::Floor).collect();
        if free.len() < n {
            return Err(EngineError::Setup(format!("{n} players do not fit on {} floor cells", free.len())));
        }
        free.shuffle(&mut rng);
        let setups = (0..n)
            .map(|i| AgentSetup {
                role: roles[i],
                pose: Pose::new(free[i], *Direction::ALL.choose(&mut rng).expect("four directions")),
                tasks: std::mem::take(&mut tasks[i]),
            })
            .collect();
        Self::new(config, map, setups, seed)
    }

    /// Writes the header record and settles any trivially decided game.
    pub fn start(&mut self, policies: &[String]) {
        let agents = self
            .agents
            .iter()
            .map(|a| AgentInfo {
                id: a.id,
                role: a.role,
                pose: a.pose,
                tasks: a.assigned_tasks.clone(),
                policy: policies.get(a.id.0).cloned().unwrap_or_default(),
            })
            .collect();
        let header = Header {
            version: LOG_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            map: self.initial_map.snapshot(),
            agents,
        };
        self.push(Event::Header(header));
        self.settle();
    }

    /// Appends the footer record. Idempotent.
    pub fn finish(&mut self) {
        if matches!(self.log.last(), Some(LogRecord { event: Event::Footer(_), .. })) {
            return;
        }
        let footer =
            Footer { macro_steps: self.macro_step, env_steps: self.env_step, records: self.log.len() + 1 };
        self.push(Event::Footer(footer));
    }

    pub fn is_over(&self) -> bool {
        self.phase == Phase::Over
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(id.0)
    }

    pub fn alive_ids(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|a| a.alive).map(|a| a.id).collect()
    }

    pub fn alive_count(&self, role: Role) -> usize {
        self.agents.iter().filter(|a| a.alive && a.role == role).count()
    }

    pub fn ejected_count(&self) -> usize {
        self.agents.iter().filter(|a| a.ejected).count()
    }

    pub fn initial_count(&self, role: Role) -> usize {
        match role {
            Role::Crewmate => self.initial_crew,
            Role::Impostor => self.initial_impostors,
        }
    }

    pub fn initial_map(&self) -> &GridMap {
        &self.initial_map
    }

    /// Living agent standing on a cell.
    pub fn agent_at(&self, c: Cell) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.alive && a.pose.cell == c)
    }

    fn can_enter(&self, c: Cell) -> bool {
        !self.map.is_blocked(c) && self.agent_at(c).is_none()
    }

    fn trigger_ready(&self, a: &AgentState) -> bool {
        a.last_trigger.is_none_or(|t| self.env_step >= t + self.config.trigger_cooldown)
    }

    /// Index of the assigned, incomplete station faced by a crewmate.
    fn faced_own_task(&self, a: &AgentState) -> Option<usize> {
        let i = self.map.station_index(a.pose.front())?;
        let s = &self.map.task_stations[i];
        (!s.complete && a.assigned_tasks.contains(&s.id)).then_some(i)
    }

    fn visible_unreported_corpse(&self, a: &AgentState) -> Option<Cell> {
        if self.map.corpses.iter().all(|c| c.reported) {
            return None;
        }
        let seen = visible_cells(&self.map, a.pose, self.config.vision_radius);
        self.map.corpses.iter().find(|c| !c.reported && seen.contains(&c.position)).map(|c| c.position)
    }

    fn faced_victim(&self, a: &AgentState) -> Option<AgentId> {
        self.agent_at(a.pose.front()).filter(|v| v.role == Role::Crewmate).map(|v| v.id)
    }

    /// Legal actions in ascending code order; empty for dead agents or
    /// outside the task phase.
    pub fn allowed_actions(&self, id: AgentId) -> Vec<Action> {
        let Some(a) = self.agent(id) else {
            return Vec::new();
        };
        if !a.alive || self.phase != Phase::Task {
            return Vec::new();
        }
        let front = a.pose.front();
        Action::ALL
            .into_iter()
            .filter(|&act| match act {
                Action::MoveForward | Action::MoveBackward | Action::StrafeRight | Action::StrafeLeft => {
                    let d = act.move_direction(a.pose.facing).expect("move action");
                    self.can_enter(a.pose.cell.offset(d.delta()))
                }
                Action::TurnLeft | Action::TurnRight | Action::TurnBack | Action::Noop => true,
                Action::DoTask => match a.role {
                    Role::Crewmate => self.faced_own_task(a).is_some(),
                    Role::Impostor => self.map.station_index(front).is_some(),
                },
                Action::OpenDoor => self.map.is_door_open(front) == Some(false),
                Action::CloseDoor => {
                    self.map.is_door_open(front) == Some(true)
                        && self.agent_at(front).is_none()
                        && self.map.corpse_at(front).is_none()
                }
                Action::ReportDeadbody => self.trigger_ready(a) && self.visible_unreported_corpse(a).is_some(),
                Action::CallDiscussion => self.trigger_ready(a) && front == self.map.button,
                Action::Kill => {
                    a.role == Role::Impostor && a.kill_cooldown == 0 && self.faced_victim(a).is_some()
                }
            })
            .collect()
    }

    fn push(&mut self, event: Event) {
        self.log.push(LogRecord { step: self.env_step, macro_step: self.macro_step, event });
    }

    fn violation(&mut self, agent: AgentId, code: ViolationCode, detail: impl Into<String>) {
        self.push(Event::Violation(Violation { agent, code, detail: detail.into() }));
    }

    /// Logs an agent-side fault (connection, timeout, malformed reply).
    pub fn record_violation(&mut self, agent: AgentId, code: ViolationCode, detail: impl Into<String>) {
        self.violation(agent, code, detail);
    }

    fn reward(&mut self, out: &mut Vec<RewardEvent>, agent: AgentId, kind: RewardKind) {
        let role = self.agents[agent.0].role;
        let e = RewardEvent::new(agent, role, kind);
        self.push(Event::Reward(e.clone()));
        out.push(e);
    }

    /// Applies one action immediately. Codes outside the allowed set resolve
    /// as NOOP with a logged violation.
    pub fn apply_action(&mut self, id: AgentId, intent: &Intent) -> Result<Vec<RewardEvent>, EngineError> {
        if self.phase != Phase::Task {
            return Err(EngineError::Phase(format!("apply_action during {:?} phase", self.phase)));
        }
        let allowed = self.allowed_actions(id);
        self.submit(id, intent, &allowed)
    }

    fn submit(&mut self, id: AgentId, intent: &Intent, allowed: &[Action]) -> Result<Vec<RewardEvent>, EngineError> {
        match self.agent(id) {
            None => {
                return Err(EngineError::Phase(format!("unknown agent {id}")));
            }
            Some(a) if !a.alive => {
                self.violation(id, ViolationCode::DeadAgent, format!("{id} is not alive"));
                return Ok(Vec::new());
            }
            Some(_) => {}
        }
        let action = match Action::from_code(intent.code) {
            Some(a) if allowed.contains(&a) => a,
            Some(a) => {
                self.violation(id, ViolationCode::IllegalAction, format!("{} not allowed", a.name()));
                Action::Noop
            }
            None => {
                self.violation(id, ViolationCode::IllegalAction, format!("invalid action code {}", intent.code));
                Action::Noop
            }
        };
        Ok(self.resolve(id, intent, action))
    }

    fn resolve(&mut self, id: AgentId, intent: &Intent, action: Action) -> Vec<RewardEvent> {
        let idx = id.0;
        let before = self.agents[idx].pose;
        let role = self.agents[idx].role;
        let front = before.front();
        let mut after = before;
        let mut outcome = StepOutcome::Ok;
        let mut target = None;
        let mut task = None;
        let mut door = None;
        let mut extra: Vec<Event> = Vec::new();
        let mut rewards: Vec<(AgentId, RewardKind)> = Vec::new();

        match action {
            Action::MoveForward | Action::MoveBackward | Action::StrafeRight | Action::StrafeLeft => {
                let d = action.move_direction(before.facing).expect("move action");
                let dest = before.cell.offset(d.delta());
                if self.can_enter(dest) {
                    after.cell = dest;
                } else {
                    outcome = StepOutcome::Blocked;
                }
            }
            Action::TurnLeft | Action::TurnRight | Action::TurnBack => after.facing = action.turned(before.facing),
            Action::Noop => {}
            Action::DoTask => {
                target = Some(front);
                match role {
                    Role::Crewmate => match self.faced_own_task(&self.agents[idx]) {
                        Some(i) => {
                            let station = &mut self.map.task_stations[i];
                            let done = station.toggle();
                            task = Some(TaskProgress {
                                station: station.id.clone(),
                                progress: station.progress,
                                complete: station.complete,
                            });
                            rewards.push((id, RewardKind::TaskToggle));
                            if done {
                                rewards.push((id, RewardKind::task_done(station.kind)));
                            }
                        }
                        None => outcome = StepOutcome::Failed,
                    },
                    Role::Impostor => {
                        outcome = if self.map.station_index(front).is_some() {
                            StepOutcome::FakeTask
                        } else {
                            StepOutcome::Failed
                        };
                    }
                }
            }
            Action::OpenDoor | Action::CloseDoor => {
                target = Some(front);
                let open = action == Action::OpenDoor;
                let legal = match self.map.is_door_open(front) {
                    Some(state) if state != open => {
                        open || (self.agent_at(front).is_none() && self.map.corpse_at(front).is_none())
                    }
                    _ => false,
                };
                if legal {
                    self.map.set_door(front, open);
                    door = Some(DoorChange { position: front, open });
                } else {
                    outcome = StepOutcome::Failed;
                }
            }
            Action::ReportDeadbody | Action::CallDiscussion => {
                let a = &self.agents[idx];
                let (trigger, corpse, ok) = if action == Action::ReportDeadbody {
                    let c = self.visible_unreported_corpse(a);
                    (MeetingTrigger::BodyReport, c, c.is_some())
                } else {
                    target = Some(front);
                    (MeetingTrigger::EmergencyButton, None, front == self.map.button)
                };
                if ok && self.trigger_ready(a) && self.pending_meeting.is_none() {
                    self.pending_meeting = Some(trigger);
                    self.agents[idx].last_trigger = Some(self.env_step);
                    extra.push(Event::Report(ReportEvent { agent: id, trigger, corpse }));
                } else {
                    outcome = StepOutcome::Failed;
                }
            }
            Action::Kill => {
                target = Some(front);
                let a = &self.agents[idx];
                let victim = if a.role == Role::Impostor && a.kill_cooldown == 0 { self.faced_victim(a) } else { None };
                match victim {
                    Some(v) => {
                        let killer_cell = before.cell;
                        let witnesses: Vec<AgentId> = self
                            .agents
                            .iter()
                            .filter(|w| w.alive && w.id != id && w.id != v && w.pose.cell.manhattan(killer_cell) <= 2)
                            .map(|w| w.id)
                            .collect();
                        let position = self.agents[v.0].pose.cell;
                        self.agents[v.0].alive = false;
                        self.agents[idx].kill_cooldown = self.config.kill_cooldown;
                        self.map.corpses.push(crate::world::Corpse { position, victim: v.to_string(), reported: false });
                        let kill = KillEvent { killer: id, victim: v, position, witnesses };
                        self.kills.push((self.env_step, kill.clone()));
                        extra.push(Event::Kill(kill));
                        rewards.push((id, RewardKind::KillKiller));
                        rewards.push((v, RewardKind::KillVictim));
                    }
                    None => outcome = StepOutcome::Failed,
                }
            }
        }

        self.agents[idx].pose = after;
        let history_len = self.config.history_len;
        let entry = HistoryEntry { step: self.env_step, from: before.cell, action, to: after.cell };
        let history = &mut self.agents[idx].history;
        history.push_back(entry);
        while history.len() > history_len {
            history.pop_front();
        }

        self.push(Event::Step(StepEvent {
            agent: id,
            action: intent.code,
            executed: action,
            from: before,
            to: after,
            outcome,
            target,
            task,
            door,
            thought: intent.thought.clone(),
        }));
        for e in extra {
            self.push(e);
        }
        let mut out = Vec::new();
        for (agent, kind) in rewards {
            self.reward(&mut out, agent, kind);
        }
        self.reward(&mut out, id, RewardKind::StepPenalty);
        out
    }

    /// One decision cycle: every living agent's decision is checked against
    /// the allowed sets at the start of the macro-step and applied in a
    /// seeded order on the first env step; the remaining env steps only
    /// advance timers. Returns the range of log records appended.
    pub fn advance_macro_step(&mut self, decisions: &BTreeMap<AgentId, Intent>) -> Result<Range<usize>, EngineError> {
        if self.phase != Phase::Task {
            return Err(EngineError::Phase(format!("advance_macro_step during {:?} phase", self.phase)));
        }
        let start = self.log.len();
        let alive = self.alive_ids();
        let allowed: BTreeMap<AgentId, Vec<Action>> = alive.iter().map(|&id| (id, self.allowed_actions(id))).collect();
        let mut order = alive;
        order.shuffle(&mut self.rng);
        for id in order {
            if self.is_over() {
                break;
            }
            if !self.agents[id.0].alive {
                continue;
            }
            let intent = match decisions.get(&id) {
                Some(i) => i.clone(),
                None => {
                    self.violation(id, ViolationCode::MissingDecision, "no decision submitted");
                    Intent::from(Action::Noop)
                }
            };
            self.submit(id, &intent, &allowed[&id])?;
            self.settle();
        }
        if self.is_over() {
            return Ok(start..self.log.len());
        }

        let before = self.env_step;
        for _ in 0..self.config.env_steps_per_macro {
            self.env_step += 1;
            for a in &mut self.agents {
                a.kill_cooldown = a.kill_cooldown.saturating_sub(1);
            }
        }
        self.macro_step += 1;
        let interval = self.config.voting_interval;
        if self.env_step / interval > before / interval && self.pending_meeting.is_none() {
            self.pending_meeting = Some(MeetingTrigger::Scheduled);
        }
        if self.pending_meeting.is_some() {
            self.phase = Phase::Voting;
        } else {
            self.settle();
        }
        Ok(start..self.log.len())
    }

    /// Resolves the pending meeting. Every living agent should submit one
    /// record; gaps and invalid entries are repaired and logged.
    pub fn run_voting_phase(&mut self, submitted: Vec<VoteRecord>) -> Result<Range<usize>, EngineError> {
        if self.phase != Phase::Voting {
            return Err(EngineError::Phase(format!("run_voting_phase during {:?} phase", self.phase)));
        }
        let start = self.log.len();
        self.vote_rounds += 1;
        let phase_index = self.vote_rounds;
        let trigger = self.pending_meeting.unwrap_or(MeetingTrigger::Scheduled);
        let alive = self.alive_ids();

        let mut by_voter: BTreeMap<AgentId, VoteRecord> = BTreeMap::new();
        for v in submitted {
            if !alive.contains(&v.voter) {
                self.violation(v.voter, ViolationCode::DeadAgent, "vote from a player who is not alive");
                continue;
            }
            by_voter.entry(v.voter).or_insert(v);
        }

        let mut votes = Vec::with_capacity(alive.len());
        for &voter in &alive {
            let mut v = match by_voter.remove(&voter) {
                Some(v) => v,
                None => {
                    self.violation(voter, ViolationCode::MissingDecision, "no vote submitted");
                    VoteRecord::skip(voter)
                }
            };
            v.phase_index = phase_index;
            if let VoteTarget::Player(t) = v.target {
                if t == voter || !alive.contains(&t) {
                    self.violation(voter, ViolationCode::InvalidVote, format!("vote for {t} counted as skip"));
                    v.target = VoteTarget::Skip;
                    v.invalid = true;
                }
            }
            let mut trust = BTreeMap::new();
            let mut imputed = Vec::new();
            for &other in alive.iter().filter(|&&o| o != voter) {
                match v.trust_scores.get(&other) {
                    Some(&t) if t.is_finite() => {
                        trust.insert(other, t.clamp(0.0, 1.0));
                    }
                    _ => {
                        trust.insert(other, 0.5);
                        imputed.push(other);
                    }
                }
            }
            if !imputed.is_empty() {
                let names: Vec<String> = imputed.iter().map(|i| i.to_string()).collect();
                self.violation(voter, ViolationCode::MissingTrust, format!("imputed 0.5 for {}", names.join(",")));
            }
            v.trust_scores = trust;
            v.imputed = imputed;
            votes.push(v);
        }

        let mut tally: BTreeMap<AgentId, u32> = BTreeMap::new();
        let mut skips = 0;
        for v in &votes {
            match v.target {
                VoteTarget::Skip => skips += 1,
                VoteTarget::Player(t) => *tally.entry(t).or_insert(0) += 1,
            }
        }
        let top = tally.values().copied().max().unwrap_or(0);
        let leaders: Vec<AgentId> = tally.iter().filter(|(_, &c)| c == top).map(|(&id, _)| id).collect();
        let ejected = (top > 0 && leaders.len() == 1).then(|| leaders[0]);

        self.push(Event::VoteRound(VoteRound {
            phase: phase_index,
            trigger,
            alive: alive.clone(),
            votes: votes.clone(),
            tally,
            skips,
            ejected,
        }));

        let mut out = Vec::new();
        for v in &votes {
            let kind = match (self.agents[v.voter.0].role, v.target) {
                (_, VoteTarget::Skip) => Some(RewardKind::SkipVote),
                (Role::Crewmate, VoteTarget::Player(t)) => Some(match self.agents[t.0].role {
                    Role::Impostor => RewardKind::VoteImpostorCorrect,
                    Role::Crewmate => RewardKind::VoteCrewWrong,
                }),
                (Role::Impostor, VoteTarget::Player(_)) => None,
            };
            if let Some(kind) = kind {
                self.reward(&mut out, v.voter, kind);
            }
        }

        if let Some(e) = ejected {
            let role = self.agents[e.0].role;
            self.agents[e.0].alive = false;
            self.agents[e.0].ejected = true;
            self.push(Event::Ejection(Ejection { agent: e, role }));
            match role {
                Role::Impostor => self.reward(&mut out, e, RewardKind::EjectedImpostor),
                Role::Crewmate => {
                    self.reward(&mut out, e, RewardKind::EjectedCrew);
                    let imps: Vec<AgentId> =
                        self.agents.iter().filter(|a| a.alive && a.role == Role::Impostor).map(|a| a.id).collect();
                    for i in imps {
                        self.reward(&mut out, i, RewardKind::CrewEjectedBonus);
                    }
                }
            }
        }

        for c in &mut self.map.corpses {
            c.reported = true;
        }
        self.pending_meeting = None;
        self.phase = Phase::Task;
        self.settle();
        Ok(start..self.log.len())
    }

    fn all_tasks_complete(&self) -> bool {
        let mut any = false;
        for a in self.agents.iter().filter(|a| a.alive && a.role == Role::Crewmate) {
            for t in &a.assigned_tasks {
                any = true;
                if !self.map.station(t).is_some_and(|s| s.complete) {
                    return false;
                }
            }
        }
        any
    }

    /// Termination predicates in priority order.
    pub fn check_termination(&self) -> Option<GameOutcome> {
        let crew = self.alive_count(Role::Crewmate);
        let imps = self.alive_count(Role::Impostor);
        let outcome = |winner, cause| Some(GameOutcome { winner, cause });
        if self.initial_impostors > 0 && imps == 0 {
            return outcome(Team::Crew, Cause::AllImpostorsEjected);
        }
        if crew > 0 && self.all_tasks_complete() {
            return outcome(Team::Crew, Cause::AllTasksComplete);
        }
        if self.initial_crew > 0 && crew == 0 {
            return outcome(Team::Impostors, Cause::AllCrewEliminated);
        }
        if imps > 0 && imps >= crew {
            return outcome(Team::Impostors, Cause::ImpostorParity);
        }
        if self.macro_step >= self.config.max_macro_steps {
            return outcome(Team::Impostors, Cause::Timeout);
        }
        None
    }

    /// Ends the game if a termination predicate holds, paying ±10 once to
    /// every agent of each team.
    fn settle(&mut self) {
        if self.outcome.is_some() {
            return;
        }
        let Some(outcome) = self.check_termination() else {
            return;
        };
        self.outcome = Some(outcome);
        self.phase = Phase::Over;
        self.pending_meeting = None;
        self.push(Event::Termination(outcome));
        let payouts: Vec<(AgentId, RewardKind)> = self
            .agents
            .iter()
            .map(|a| {
                let kind = if a.role.team() == outcome.winner { RewardKind::GameWin } else { RewardKind::GameLoss };
                (a.id, kind)
            })
            .collect();
        let mut sink = Vec::new();
        for (id, kind) in payouts {
            self.reward(&mut sink, id, kind);
        }
    }

    /// Env-step kills witnessed by `agent` (as a listed witness) after
    /// `since`.
    pub fn kills_witnessed_by(&self, agent: AgentId, since: Option<u64>) -> Vec<&KillEvent> {
        self.kills
            .iter()
            .filter(|(step, k)| since.is_none_or(|s| *step >= s) && k.witnesses.contains(&agent))
            .map(|(_, k)| k)
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        crate::log::EpisodeLog { records: self.log.clone() }.to_jsonl()
    }
}
