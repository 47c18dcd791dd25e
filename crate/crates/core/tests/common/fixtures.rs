//! Synthetic action traces, one per failure kind, at the default
//! thresholds.

use socialgrid::diagnostics::{detect_trace, DetectorParams, FailureKind, TraceStep};
use socialgrid::{Action, AgentId, Cell, Direction};

use Action::*;

/// Walks an open plane from (50,50) facing right. Door actions carry the
/// door they aim at; a `Some(false)` progress marker makes DO_TASK fail.
pub fn walk(actions: &[(Action, Option<Cell>)]) -> Vec<TraceStep> {
    let mut cell = Cell::new(50, 50);
    let mut facing = Direction::Right;
    actions
        .iter()
        .enumerate()
        .map(|(i, &(a, target))| {
            let from = cell;
            if let Some(d) = a.move_direction(facing) {
                cell = cell.offset(d.delta());
            }
            if a.is_turn() {
                facing = a.turned(facing);
            }
            TraceStep { step: 5 * i as u64, action: a, from, to: cell, target, progressed: false }
        })
        .collect()
}

pub fn plain(actions: &[Action]) -> Vec<TraceStep> {
    walk(&actions.iter().map(|&a| (a, None)).collect::<Vec<_>>())
}

pub fn kinds(trace: &[TraceStep]) -> Vec<FailureKind> {
    detect_trace(AgentId(0), trace, &DetectorParams::default()).into_iter().map(|f| f.kind).collect()
}

pub fn door(x: i32) -> Option<Cell> {
    Some(Cell::new(x, 49))
}

pub fn fixtures() -> Vec<(FailureKind, Vec<TraceStep>)> {
    let a = door(50);
    let b = door(51);
    let c = door(52);
    let spam = [a, None, None, b, None, None, c, None, None, a, None, None, b]
        .map(|t| if t.is_some() { (OpenDoor, t) } else { (Noop, None) });
    let cycle = |x: Action, y: Action| [x, x, x, y, y].repeat(3);
    vec![
        (FailureKind::DoorToggle, walk(&[(OpenDoor, a), (CloseDoor, a), (OpenDoor, a)])),
        (FailureKind::DoorSpam, walk(&spam)),
        (FailureKind::PositionPingPong, plain(&[[MoveForward, TurnBack].repeat(4), vec![MoveForward]].concat())),
        (FailureKind::MoveBacktrackLoop, plain(&cycle(MoveForward, MoveBackward))),
        (FailureKind::StrafeBacktrackLoop, plain(&cycle(StrafeLeft, StrafeRight))),
        (FailureKind::MoveOscillation, plain(&[MoveForward, MoveBackward, MoveForward, MoveBackward])),
        (FailureKind::StrafeOscillation, plain(&[StrafeLeft, StrafeRight, StrafeLeft, StrafeRight])),
        (FailureKind::TurnToggle, plain(&[TurnLeft, TurnRight, TurnLeft, TurnRight])),
        (FailureKind::StallNoop, plain(&[Noop; 5])),
        (FailureKind::TaskFixation, plain(&[DoTask; 10])),
    ]
}

