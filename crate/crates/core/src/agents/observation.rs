//! Per-agent structured payloads. Field names follow the prompt schema that
//! external agents render (`SELF_INFORMATION`, `ALLOWED_ACTIONS`, ...).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{Action, AgentId, Role};
use crate::engine::{GameState, HistoryEntry, MeetingTrigger, VoteTarget};
use crate::log::KillEvent;
use crate::oracle::{suggest, NavSuggestion, OracleLevel, TargetKind};
use crate::world::{format_position, render_patch, visible_cells, Cell, Direction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub name: String,
    pub pos: String,
    pub progress: u32,
    pub required: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameInfo {
    pub width: i32,
    pub height: i32,
    pub n_agents: usize,
    pub n_impostors: usize,
    pub vision_radius: u32,
    pub oracle_level: OracleLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfInfo {
    #[serde(rename = "NAME")]
    pub name: AgentId,
    #[serde(rename = "ROLE")]
    pub role: Role,
    #[serde(rename = "Position")]
    pub position: String,
    #[serde(rename = "XY")]
    pub cell: Cell,
    #[serde(rename = "Direction")]
    pub direction: Direction,
    #[serde(rename = "TASKS_TO_COMPLETE")]
    pub tasks: Vec<TaskInfo>,
    #[serde(rename = "ALLOWED_ACTIONS")]
    pub allowed_actions: Vec<Action>,
    #[serde(rename = "BEST_ACTION_SUGGESTION")]
    pub best_action_suggestion: Vec<Action>,
    #[serde(rename = "TASK_NAV_ASTAR_DIST")]
    pub task_nav_astar_dist: BTreeMap<String, u32>,
    #[serde(rename = "PLAYER_NAV_ASTAR_DIST", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub player_nav_astar_dist: BTreeMap<String, u32>,
    #[serde(rename = "NEAREST_PLAYER_DIST")]
    pub nearest_player_dist: Option<u32>,
    #[serde(rename = "KILL_COOLDOWN", default, skip_serializing_if = "Option::is_none")]
    pub kill_cooldown: Option<u64>,
    #[serde(rename = "TEAMMATES", default, skip_serializing_if = "Vec::is_empty")]
    pub teammates: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub ascii_patch: Vec<String>,
    pub visible_players: BTreeMap<AgentId, Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewBlock {
    pub step: u64,
    pub view: View,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "GAME")]
    pub game: GameInfo,
    #[serde(rename = "SELF_INFORMATION")]
    pub self_info: SelfInfo,
    #[serde(rename = "SELF_HISTORY")]
    pub history: Vec<HistoryEntry>,
    #[serde(rename = "STALL_ALERT")]
    pub stall_alert: bool,
    #[serde(rename = "OBSERVATION")]
    pub observation: ViewBlock,
    #[serde(rename = "WITNESSED_KILLS", default)]
    pub witnessed_kills: Vec<KillEvent>,
    #[serde(rename = "NAV_SUGGESTIONS", default)]
    pub suggestions: BTreeMap<String, NavSuggestion>,
}

impl Observation {
    pub fn allowed(&self) -> &[Action] {
        &self.self_info.allowed_actions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyInfo {
    pub victim: String,
    pub position: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingObservation {
    #[serde(rename = "NAME")]
    pub name: AgentId,
    #[serde(rename = "ROLE")]
    pub role: Role,
    #[serde(rename = "PHASE")]
    pub phase: u32,
    #[serde(rename = "TRIGGER")]
    pub trigger: MeetingTrigger,
    #[serde(rename = "STEP")]
    pub step: u64,
    #[serde(rename = "ALL_PLAYERS")]
    pub all_players: Vec<AgentId>,
    #[serde(rename = "ALIVE_PLAYERS")]
    pub alive_players: Vec<AgentId>,
    #[serde(rename = "ALLOWED_VOTES")]
    pub allowed_votes: Vec<VoteTarget>,
    #[serde(rename = "TEAMMATES", default, skip_serializing_if = "Vec::is_empty")]
    pub teammates: Vec<AgentId>,
    #[serde(rename = "WITNESSED_KILLS", default)]
    pub witnessed_kills: Vec<KillEvent>,
    #[serde(rename = "BODIES", default)]
    pub bodies: Vec<BodyInfo>,
}

fn teammates(state: &GameState, agent: AgentId) -> Vec<AgentId> {
    let role = state.agents[agent.0].role;
    if role != Role::Impostor {
        return Vec::new();
    }
    state.agents.iter().filter(|a| a.id != agent && a.role == Role::Impostor).map(|a| a.id).collect()
}

/// Observation for a living agent. `since` is the env step of the agent's
/// previous decision; kills it witnessed from then on are included.
pub fn build_observation(state: &GameState, agent: AgentId, level: OracleLevel, since: Option<u64>) -> Observation {
    let a = &state.agents[agent.0];
    let map = &state.map;
    let radius = state.config.vision_radius;
    let seen = visible_cells(map, a.pose, radius);
    let others: Vec<_> = state.agents.iter().filter(|o| o.alive && o.id != agent && seen.contains(&o.pose.cell)).collect();
    let suggestions = suggest(state, agent, level);

    let tasks = a
        .assigned_tasks
        .iter()
        .filter_map(|id| map.station(id))
        .filter(|s| !s.complete)
        .map(|s| TaskInfo {
            name: s.id.clone(),
            pos: format_position(map, s.position),
            progress: s.progress,
            required: s.required_toggles,
        })
        .collect();

    let dist_of = |kind: TargetKind| -> BTreeMap<String, u32> {
        suggestions.iter().filter(|(_, s)| s.kind == kind).map(|(k, s)| (k.clone(), s.astar_distance)).collect()
    };
    let primary = match a.role {
        Role::Crewmate => TargetKind::Task,
        Role::Impostor => TargetKind::Player,
    };
    let best = suggestions
        .values()
        .filter(|s| s.kind == primary)
        .min_by(|x, y| x.astar_distance.cmp(&y.astar_distance).then_with(|| x.target.cmp(&y.target)))
        .map(|s| vec![s.best_next_action])
        .unwrap_or_default();

    let history: Vec<HistoryEntry> = a.history.iter().copied().collect();
    let stall_alert = history.len() >= state.config.history_len
        && state.config.history_len > 0
        && history.iter().all(|h| h.to == history[0].from);

    let player_cells: Vec<Cell> = others.iter().map(|o| o.pose.cell).collect();
    Observation {
        game: GameInfo {
            width: map.width,
            height: map.height,
            n_agents: state.agents.len(),
            n_impostors: state.initial_count(Role::Impostor),
            vision_radius: radius,
            oracle_level: level,
        },
        self_info: SelfInfo {
            name: agent,
            role: a.role,
            position: format_position(map, a.pose.cell),
            cell: a.pose.cell,
            direction: a.pose.facing,
            tasks,
            allowed_actions: state.allowed_actions(agent),
            best_action_suggestion: best,
            task_nav_astar_dist: dist_of(TargetKind::Task),
            player_nav_astar_dist: dist_of(TargetKind::Player),
            nearest_player_dist: others.iter().map(|o| o.pose.cell.manhattan(a.pose.cell)).min(),
            kill_cooldown: (a.role == Role::Impostor).then_some(a.kill_cooldown),
            teammates: teammates(state, agent),
        },
        history,
        stall_alert,
        observation: ViewBlock {
            step: state.env_step,
            view: View {
                ascii_patch: render_patch(map, &player_cells, a.pose.cell, radius),
                visible_players: others.iter().map(|o| (o.id, o.pose.cell)).collect(),
            },
        },
        witnessed_kills: state.kills_witnessed_by(agent, since).into_iter().cloned().collect(),
        suggestions,
    }
}

pub fn build_voting_observation(state: &GameState, agent: AgentId) -> VotingObservation {
    let a = &state.agents[agent.0];
    let alive = state.alive_ids();
    let mut allowed_votes: Vec<VoteTarget> =
        alive.iter().filter(|&&id| id != agent).map(|&id| VoteTarget::Player(id)).collect();
    allowed_votes.push(VoteTarget::Skip);
    VotingObservation {
        name: agent,
        role: a.role,
        phase: state.vote_rounds + 1,
        trigger: state.pending_meeting.unwrap_or(MeetingTrigger::Scheduled),
        step: state.env_step,
        all_players: state.agents.iter().map(|o| o.id).collect(),
        alive_players: alive,
        allowed_votes,
        teammates: teammates(state, agent),
        witnessed_kills: state.kills_witnessed_by(agent, None).into_iter().cloned().collect(),
        bodies: state
            .map
            .corpses
            .iter()
            .map(|c| BodyInfo { victim: c.victim.clone(), position: c.position })
            .collect(),
    }
}
