//! Replay export: full-map ASCII frames, trust time series, and voting
//! transcripts rebuilt from a log, in one JSON document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{AgentId, Role};
use crate::engine::{GameOutcome, VoteRecord};
use crate::log::{EpisodeLog, Event};
use crate::world::{Cell, Corpse, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("log has no header record")]
    NoHeader,
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u64,
    pub macro_step: u64,
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustPoint {
    pub step: u64,
    pub phase: u32,
    pub trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTranscript {
    pub step: u64,
    pub phase: u32,
    pub alive: Vec<AgentId>,
    pub votes: Vec<VoteRecord>,
    pub ejected: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub seed: u64,
    pub roles: BTreeMap<AgentId, Role>,
    /// Glyph used for each player in the frames.
    pub legend: BTreeMap<AgentId, char>,
    pub frames: Vec<Frame>,
    /// voter -> target -> series.
    pub trust: BTreeMap<AgentId, BTreeMap<AgentId, Vec<TrustPoint>>>,
    pub votes: Vec<VoteTranscript>,
    pub outcome: Option<GameOutcome>,
}

pub fn player_glyph(id: AgentId) -> char {
    std::char::from_digit(id.0 as u32 % 36, 36).expect("base 36 digit")
}

pub fn export_replay(log: &EpisodeLog) -> Result<Replay, ReplayError> {
    let header = log.header().ok_or(ReplayError::NoHeader)?;
    let mut map = header.map.to_map()?;
    let mut positions: BTreeMap<AgentId, Cell> = header.agents.iter().map(|a| (a.id, a.pose.cell)).collect();
    let legend: BTreeMap<AgentId, char> = positions.keys().map(|&id| (id, player_glyph(id))).collect();
    let render = |map: &crate::world::GridMap, positions: &BTreeMap<AgentId, Cell>| -> Vec<String> {
        (0..map.height)
            .map(|y| {
                (0..map.width)
                    .map(|x| {
                        let c = Cell::new(x, y);
                        positions.iter().find(|(_, &p)| p == c).map_or_else(|| map.glyph(c), |(&id, _)| player_glyph(id))
                    })
                    .collect()
            })
            .collect()
    };
    let mut frames = vec![Frame { step: 0, macro_step: 0, rows: render(&map, &positions) }];
    let mut trust: BTreeMap<AgentId, BTreeMap<AgentId, Vec<TrustPoint>>> = BTreeMap::new();
    let mut votes = Vec::new();
    let mut pending: Option<(u64, u64)> = None;
    for r in &log.records {
        if let Some((step, macro_step)) = pending {
            if step != r.step {
                frames.push(Frame { step, macro_step, rows: render(&map, &positions) });
                pending = None;
            }
        }
        match &r.event {
            Event::Step(e) => {
                positions.insert(e.agent, e.to.cell);
                if let Some(d) = &e.door {
                    map.set_door(d.position, d.open);
                }
                pending = Some((r.step, r.macro_step));
            }
            Event::Kill(k) => {
                positions.remove(&k.victim);
                map.corpses.push(Corpse { position: k.position, victim: k.victim.to_string(), reported: false });
                pending = Some((r.step, r.macro_step));
            }
            Event::Ejection(e) => {
                positions.remove(&e.agent);
            }
            Event::VoteRound(v) => {
                for vote in &v.votes {
                    for (&target, &t) in &vote.trust_scores {
                        trust.entry(vote.voter).or_default().entry(target).or_default().push(TrustPoint {
                            step: r.step,
                            phase: v.phase,
                            trust: t,
                        });
                    }
                }
                votes.push(VoteTranscript {
                    step: r.step,
                    phase: v.phase,
                    alive: v.alive.clone(),
                    votes: v.votes.clone(),
                    ejected: v.ejected,
                });
            }
            _ => {}
        }
    }
    if let Some((step, macro_step)) = pending {
        frames.push(Frame { step, macro_step, rows: render(&map, &positions) });
    }
    Ok(Replay {
        seed: header.seed,
        roles: header.roles(),
        legend,
        frames,
        trust,
        votes,
        outcome: log.outcome().copied(),
    })
}
