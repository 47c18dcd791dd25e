//! Deterministic social-deduction gridworld: world model, game engine,
//! planning oracle, agents, metrics, diagnostics, and league tooling.

pub mod action;
pub mod agents;
pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod league;
pub mod log;
pub mod metrics;
pub mod oracle;
pub mod replay;
pub mod report;
pub mod reward;
pub mod runner;
pub mod seed;
pub mod world;

pub use action::{Action, AgentId, Role, Team};
pub use engine::{EngineConfig, GameOutcome, GameState, Intent, VoteRecord, VoteTarget};
pub use log::{EpisodeLog, Event, LogRecord};
pub use world::{Cell, Direction, GridMap, MapConfig, Pose};
