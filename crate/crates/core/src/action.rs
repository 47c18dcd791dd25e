use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Player identity, rendered on the wire as `Player_<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Player_{}", self.0)
    }
}

impl FromStr for AgentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("Player_")
            .and_then(|n| n.parse().ok())
            .map(AgentId)
            .ok_or_else(|| format!("not a player id: {s:?}"))
    }
}

impl TryFrom<String> for AgentId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AgentId> for String {
    fn from(id: AgentId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Crewmate,
    Impostor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Crew,
    Impostors,
}

impl Role {
    pub fn team(self) -> Team {
        match self {
            Role::Crewmate => Team::Crew,
            Role::Impostor => Team::Impostors,
        }
    }
}

/// The 14 discrete actions with their wire codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Action {
    MoveForward = 0,
    MoveBackward = 1,
    StrafeRight = 2,
    StrafeLeft = 3,
    TurnLeft = 4,
    TurnRight = 5,
    TurnBack = 6,
    Noop = 7,
    DoTask = 8,
    OpenDoor = 9,
    CloseDoor = 10,
    ReportDeadbody = 11,
    CallDiscussion = 12,
    Kill = 13,
}

impl Action {
    pub const ALL: [Action; 14] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::StrafeRight,
        Action::StrafeLeft,
        Action::TurnLeft,
        Action::TurnRight,
        Action::TurnBack,
        Action::Noop,
        Action::DoTask,
        Action::OpenDoor,
        Action::CloseDoor,
        Action::ReportDeadbody,
        Action::CallDiscussion,
        Action::Kill,
    ];

    pub const MOVES: [Action; 4] = [Action::MoveForward, Action::MoveBackward, Action::StrafeRight, Action::StrafeLeft];
    pub const TURNS: [Action; 3] = [Action::TurnLeft, Action::TurnRight, Action::TurnBack];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_move(self) -> bool {
        Self::MOVES.contains(&self)
    }

    pub fn is_turn(self) -> bool {
        Self::TURNS.contains(&self)
    }

    pub fn is_door(self) -> bool {
        matches!(self, Action::OpenDoor | Action::CloseDoor)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveForward => "MOVE_FORWARD",
            Action::MoveBackward => "MOVE_BACKWARD",
            Action::StrafeRight => "STRAFE_RIGHT",
            Action::StrafeLeft => "STRAFE_LEFT",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::TurnBack => "TURN_BACK",
            Action::Noop => "NOOP",
            Action::DoTask => "DO_TASK",
            Action::OpenDoor => "OPEN_DOOR",
            Action::CloseDoor => "CLOSE_DOOR",
            Action::ReportDeadbody => "REPORT_DEADBODY",
            Action::CallDiscussion => "CALL_DISCUSSION",
            Action::Kill => "KILL",
        }
    }

    /// Movement direction relative to `facing`, for the four move actions.
    pub fn move_direction(self, facing: crate::world::Direction) -> Option<crate::world::Direction> {
        match self {
            Action::MoveForward => Some(facing),
            Action::MoveBackward => Some(facing.reverse()),
            Action::StrafeRight => Some(facing.turn_right()),
            Action::StrafeLeft => Some(facing.turn_left()),
            _ => None,
        }
    }

    /// Facing after a turn action; identity for everything else.
    pub fn turned(self, facing: crate::world::Direction) -> crate::world::Direction {
        match self {
            Action::TurnLeft => facing.turn_left(),
            Action::TurnRight => facing.turn_right(),
            Action::TurnBack => facing.reverse(),
            _ => facing,
        }
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Action::from_code(code).ok_or_else(|| format!("invalid action code {code}"))
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.code()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Direction;

    #[test]
    fn codes_match_positions() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.code() as usize, i);
        }
        assert_eq!(Action::from_code(14), None);
        assert_eq!(Action::Kill.code(), 13);
    }

    #[test]
    fn relative_moves() {
        assert_eq!(Action::StrafeRight.move_direction(Direction::Up), Some(Direction::Right));
        assert_eq!(Action::StrafeLeft.move_direction(Direction::Up), Some(Direction::Left));
        assert_eq!(Action::MoveBackward.move_direction(Direction::Right), Some(Direction::Left));
        assert_eq!(Action::TurnBack.turned(Direction::Down), Direction::Up);
    }

    #[test]
    fn agent_id_wire_form() {
        let id: AgentId = "Player_12".parse().unwrap();
        assert_eq!(id, AgentId(12));
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"Player_12\"");
        assert!("player12".parse::<AgentId>().is_err());
    }
}
