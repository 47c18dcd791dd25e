//! Agent-facing side: observation payloads, the policy interface, scripted
//! baselines, and the remote bridge.

pub mod observation;
pub mod policy;
pub mod remote;

pub use observation::{build_observation, build_voting_observation, Observation, VotingObservation};
pub use policy::{AgentFault, BuiltinSpec, Decision, Mover, Policy, ScriptedPolicy, VoteDecision, Voter};
pub use remote::{Endpoint, RemotePolicy};
