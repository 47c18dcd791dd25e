//! Role-specific reward table.

use serde::{Deserialize, Serialize};

use crate::action::{AgentId, Role};
use crate::world::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    TaskToggle,
    CommonTaskDone,
    ShortTaskDone,
    LongTaskDone,
    KillKiller,
    KillVictim,
    StepPenalty,
    VoteImpostorCorrect,
    VoteCrewWrong,
    SkipVote,
    EjectedImpostor,
    EjectedCrew,
    CrewEjectedBonus,
    GameWin,
    GameLoss,
}

impl RewardKind {
    pub const ALL: [RewardKind; 15] = [
        RewardKind::TaskToggle,
        RewardKind::CommonTaskDone,
        RewardKind::ShortTaskDone,
        RewardKind::LongTaskDone,
        RewardKind::KillKiller,
        RewardKind::KillVictim,
        RewardKind::StepPenalty,
        RewardKind::VoteImpostorCorrect,
        RewardKind::VoteCrewWrong,
        RewardKind::SkipVote,
        RewardKind::EjectedImpostor,
        RewardKind::EjectedCrew,
        RewardKind::CrewEjectedBonus,
        RewardKind::GameWin,
        RewardKind::GameLoss,
    ];

    /// Amount for a role, or `None` where the event does not apply.
    pub fn amount(self, role: Role) -> Option<f64> {
        use RewardKind::*;
        use Role::*;
        match (self, role) {
            (TaskToggle, Crewmate) => Some(0.2),
            (CommonTaskDone, Crewmate) => Some(1.0),
            (ShortTaskDone, Crewmate) => Some(2.0),
            (LongTaskDone, Crewmate) => Some(3.0),
            (KillKiller, Impostor) => Some(6.0),
            (KillVictim, Crewmate) => Some(-6.0),
            (StepPenalty, Crewmate) => Some(-0.001),
            (StepPenalty, Impostor) => Some(-0.005),
            (VoteImpostorCorrect, Crewmate) => Some(3.0),
            (VoteCrewWrong, Crewmate) => Some(-2.0),
            (SkipVote, _) => Some(0.05),
            (EjectedImpostor, Impostor) => Some(-3.0),
            (EjectedCrew, Crewmate) => Some(-2.0),
            (CrewEjectedBonus, Impostor) => Some(2.0),
            (GameWin, _) => Some(10.0),
            (GameLoss, _) => Some(-10.0),
            _ => None,
        }
    }

    pub fn task_done(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Common => RewardKind::CommonTaskDone,
            TaskKind::Short => RewardKind::ShortTaskDone,
            TaskKind::Long => RewardKind::LongTaskDone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub agent: AgentId,
    pub amount: f64,
    pub kind: RewardKind,
}

impl RewardEvent {
    /// Table lookup. Panics when the kind does not apply to the role, which
    /// is an engine bug rather than an agent error.
    pub fn new(agent: AgentId, role: Role, kind: RewardKind) -> Self {
        let amount = kind
            .amount(role)
            .unwrap_or_else(|| panic!("reward {kind:?} does not apply to {role:?}"));
        Self { agent, amount, kind }
    }
}
