//! Planning oracle: A* over `(cell, facing, doors opened so far)` with unit
//! cost per action, and the navigation suggestions built on top of it.
//!
//! Other agents are ignored when planning. Closed doors are planned
//! through at the price of one OPEN_DOOR action.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, AgentId, Role};
use crate::engine::GameState;
use crate::world::{visible_cells, Cell, Direction, GridMap, Pose, TaskStation, TileKind};

/// Equal-cost first actions are preferred in this order.
pub const TIE_ORDER: [Action; 8] = [
    Action::MoveForward,
    Action::StrafeRight,
    Action::StrafeLeft,
    Action::MoveBackward,
    Action::TurnLeft,
    Action::TurnRight,
    Action::TurnBack,
    Action::OpenDoor,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("target {0} is unreachable")]
    Unreachable(Cell),
    #[error("map has {0} doors; the planner supports at most 128")]
    TooManyDoors(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleLevel {
    High,
    Mid,
    Low,
}

impl std::str::FromStr for OracleLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(OracleLevel::High),
            "mid" => Ok(OracleLevel::Mid),
            "low" => Ok(OracleLevel::Low),
            other => Err(format!("unknown oracle level {other:?}")),
        }
    }
}

/// Search node. `opened` holds the bits of doors the plan has opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlanState {
    pub cell: Cell,
    pub facing: Direction,
    pub opened: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<Action>,
}

impl Plan {
    pub fn cost(&self) -> u32 {
        self.actions.len() as u32
    }
}

fn passable(map: &GridMap, c: Cell, opened: u128) -> bool {
    if map.corpse_at(c).is_some() {
        return false;
    }
    match map.tile(c) {
        TileKind::Floor => true,
        TileKind::Door => match map.door_index(c) {
            Some(i) => map.doors[i].open || opened & (1u128 << i) != 0,
            None => false,
        },
        _ => false,
    }
}

/// Successor of `s` under `action` on the planning graph, if defined.
/// Only move, turn, and OPEN_DOOR actions have successors.
pub fn successor(map: &GridMap, s: PlanState, action: Action) -> Option<PlanState> {
    match action {
        Action::MoveForward | Action::MoveBackward | Action::StrafeRight | Action::StrafeLeft => {
            let d = action.move_direction(s.facing)?;
            let dest = s.cell.offset(d.delta());
            passable(map, dest, s.opened).then_some(PlanState { cell: dest, ..s })
        }
        Action::TurnLeft | Action::TurnRight | Action::TurnBack => {
            Some(PlanState { facing: action.turned(s.facing), ..s })
        }
        Action::OpenDoor => {
            let front = s.cell.offset(s.facing.delta());
            let i = map.door_index(front)?;
            let bit = 1u128 << i;
            (!map.doors[i].open && s.opened & bit == 0).then_some(PlanState { opened: s.opened | bit, ..s })
        }
        _ => None,
    }
}

fn is_goal(s: PlanState, target: Cell) -> bool {
    s.cell.offset(s.facing.delta()) == target
}

/// Cheap cell-level reachability with every door passable: some neighbour
/// of `target` must be reachable from `from`.
fn roughly_reachable(map: &GridMap, from: Cell, target: Cell) -> bool {
    let walk = |c: Cell| map.corpse_at(c).is_none() && matches!(map.tile(c), TileKind::Floor | TileKind::Door);
    let goals = target.neighbors();
    let mut seen = std::collections::HashSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if goals.contains(&c) {
            return true;
        }
        for n in c.neighbors() {
            if walk(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    false
}

/// Minimum-cost action sequence from `from` to any pose adjacent to and
/// facing `to`. The result is deterministic: ties are broken by insertion
/// order with successors generated in [`TIE_ORDER`].
pub fn astar_path(map: &GridMap, from: Pose, to: Cell) -> Result<Plan, OracleError> {
    if map.doors.len() > 128 {
        return Err(OracleError::TooManyDoors(map.doors.len()));
    }
    let start = PlanState { cell: from.cell, facing: from.facing, opened: 0 };
    if is_goal(start, to) {
        return Ok(Plan { actions: Vec::new() });
    }
    if !roughly_reachable(map, from.cell, to) {
        return Err(OracleError::Unreachable(to));
    }
    let h = |s: PlanState| s.cell.manhattan(to).saturating_sub(1);
    let mut best: HashMap<PlanState, u32> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<PlanState, (PlanState, Action)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut seq: u64 = 0;
    heap.push(Reverse((h(start), seq, start)));
    while let Some(Reverse((_, _, s))) = heap.pop() {
        let g = best[&s];
        if is_goal(s, to) {
            let mut actions = Vec::with_capacity(g as usize);
            let mut cur = s;
            while let Some(&(prev, a)) = parent.get(&cur) {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Ok(Plan { actions });
        }
        for a in TIE_ORDER {
            let Some(n) = successor(map, s, a) else {
                continue;
            };
            let ng = g + 1;
            if best.get(&n).is_some_and(|&old| old <= ng) {
                continue;
            }
            best.insert(n, ng);
            parent.insert(n, (s, a));
            seq += 1;
            heap.push(Reverse((ng + h(n), seq, n)));
        }
    }
    Err(OracleError::Unreachable(to))
}

pub fn astar_distance(map: &GridMap, from: Pose, to: Cell) -> Result<u32, OracleError> {
    astar_path(map, from, to).map(|p| p.cost())
}

/// Shortest path to face the station plus the toggles it needs.
pub fn optimal_completion_length(map: &GridMap, start: Pose, station: &TaskStation) -> Result<u32, OracleError> {
    Ok(astar_distance(map, start, station.position)? + station.required_toggles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Task,
    Player,
    Button,
    Corpse,
}

impl TargetKind {
    /// Interaction that completes the approach for a role.
    fn interaction(self, role: Role) -> Action {
        match (self, role) {
            (TargetKind::Task, _) => Action::DoTask,
            (TargetKind::Button, _) => Action::CallDiscussion,
            (TargetKind::Corpse, _) => Action::ReportDeadbody,
            (TargetKind::Player, Role::Impostor) => Action::Kill,
            (TargetKind::Player, Role::Crewmate) => Action::Noop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavSuggestion {
    pub target: String,
    pub kind: TargetKind,
    pub position: Cell,
    pub astar_distance: u32,
    pub best_next_action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_outcome: Option<Pose>,
}

/// Pose after `action` assuming it succeeds.
pub fn predict(pose: Pose, action: Action) -> Pose {
    match action.move_direction(pose.facing) {
        Some(d) => Pose::new(pose.cell.offset(d.delta()), pose.facing),
        None => Pose::new(pose.cell, action.turned(pose.facing)),
    }
}

/// Suggestion toward one target for an agent in the current state.
fn suggestion_for(
    state: &GameState,
    role: Role,
    pose: Pose,
    allowed: &[Action],
    target: String,
    kind: TargetKind,
    position: Cell,
) -> Option<NavSuggestion> {
    let plan = astar_path(&state.map, pose, position).ok()?;
    let dist = plan.cost();
    let best = match plan.actions.first() {
        None => {
            let a = kind.interaction(role);
            if allowed.contains(&a) {
                a
            } else {
                Action::Noop
            }
        }
        Some(&first) if allowed.contains(&first) => first,
        Some(_) => alternative_first(state, pose, position, dist, allowed),
    };
    Some(NavSuggestion { target, kind, position, astar_distance: dist, best_next_action: best, predicted_outcome: None })
}

/// Another optimal first action when the planned one is blocked by an
/// agent; NOOP when none exists.
fn alternative_first(state: &GameState, pose: Pose, to: Cell, dist: u32, allowed: &[Action]) -> Action {
    let start = PlanState { cell: pose.cell, facing: pose.facing, opened: 0 };
    for a in TIE_ORDER {
        if !allowed.contains(&a) {
            continue;
        }
        let Some(n) = successor(&state.map, start, a) else {
            continue;
        };
        let mut map_after = None;
        if a == Action::OpenDoor {
            let mut m = state.map.clone();
            m.set_door(pose.front(), true);
            map_after = Some(m);
        }
        let map = map_after.as_ref().unwrap_or(&state.map);
        if astar_distance(map, Pose::new(n.cell, n.facing), to).is_ok_and(|d| d + 1 == dist) {
            return a;
        }
    }
    Action::Noop
}

/// Navigation suggestions keyed by target id. Low returns nothing; Mid
/// adds predicted outcomes to High's suggestions.
pub fn suggest(state: &GameState, agent: AgentId, level: OracleLevel) -> BTreeMap<String, NavSuggestion> {
    let mut out = BTreeMap::new();
    if level == OracleLevel::Low {
        return out;
    }
    let Some(a) = state.agent(agent).filter(|a| a.alive) else {
        return out;
    };
    let allowed = state.allowed_actions(agent);
    let mut targets: Vec<(String, TargetKind, Cell)> = Vec::new();
    let seen = visible_cells(&state.map, a.pose, state.config.vision_radius);
    match a.role {
        Role::Crewmate => {
            for id in &a.assigned_tasks {
                if let Some(s) = state.map.station(id).filter(|s| !s.complete) {
                    targets.push((id.clone(), TargetKind::Task, s.position));
                }
            }
        }
        Role::Impostor => {
            for other in &state.agents {
                if other.alive && other.role == Role::Crewmate && seen.contains(&other.pose.cell) {
                    targets.push((other.id.to_string(), TargetKind::Player, other.pose.cell));
                }
            }
        }
    }
    targets.push(("button".into(), TargetKind::Button, state.map.button));
    for c in &state.map.corpses {
        if !c.reported && seen.contains(&c.position) {
            targets.push((format!("body_{}", c.victim), TargetKind::Corpse, c.position));
        }
    }
    for (id, kind, pos) in targets {
        if let Some(mut s) = suggestion_for(state, a.role, a.pose, &allowed, id.clone(), kind, pos) {
            if level == OracleLevel::Mid {
                s.predicted_outcome = Some(predict(a.pose, s.best_next_action));
            }
            out.insert(id, s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::TaskKind;

    fn corridor() -> GridMap {
        let rows = ["#########", "#......T#", "#B......#", "#########"];
        GridMap::from_rows(&rows, 1, 1, 8, vec![TaskStation::new("common_task_1", Cell::new(7, 1), TaskKind::Common)])
            .unwrap()
    }

    #[test]
    fn straight_corridor() {
        let map = corridor();
        let plan = astar_path(&map, Pose::new(Cell::new(1, 1), Direction::Right), Cell::new(7, 1)).unwrap();
        assert_eq!(plan.actions, vec![Action::MoveForward; 5]);
        let st = &map.task_stations[0];
        assert_eq!(optimal_completion_length(&map, Pose::new(Cell::new(1, 1), Direction::Right), st).unwrap(), 8);
        assert_eq!(optimal_completion_length(&map, Pose::new(Cell::new(6, 1), Direction::Right), st).unwrap(), 3);
    }

    #[test]
    fn walled_target_unreachable() {
        let rows = ["#####", "#.#B#", "##T##", "#.#.#", "#####"];
        let map =
            GridMap::from_rows(&rows, 1, 1, 4, vec![TaskStation::new("t", Cell::new(2, 2), TaskKind::Long)]).unwrap();
        assert_eq!(
            astar_path(&map, Pose::new(Cell::new(1, 1), Direction::Up), Cell::new(2, 2)),
            Err(OracleError::Unreachable(Cell::new(2, 2)))
        );
    }

    #[test]
    fn closed_door_opened_once() {
        let rows = ["#########", "#...#...#", "#...D..T#", "#B..#...#", "#########"];
        let map =
            GridMap::from_rows(&rows, 1, 2, 4, vec![TaskStation::new("t", Cell::new(7, 2), TaskKind::Short)]).unwrap();
        let plan = astar_path(&map, Pose::new(Cell::new(1, 2), Direction::Right), Cell::new(7, 2)).unwrap();
        assert_eq!(plan.actions.iter().filter(|&&a| a == Action::OpenDoor).count(), 1);
        assert_eq!(plan.cost(), 6);
    }
}
