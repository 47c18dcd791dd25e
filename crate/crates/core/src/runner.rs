//! Drives one episode: builds observations, collects decisions and votes
//! from policies, and feeds them to the engine until termination.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use crate::action::{Action, AgentId, Role};
use crate::agents::{
    build_observation, build_voting_observation, AgentFault, BuiltinSpec, Decision, Endpoint, Policy, RemotePolicy,
    ScriptedPolicy, VoteDecision,
};
use crate::engine::{EngineConfig, EngineError, GameState, Intent, Phase, VoteRecord};
use crate::log::EpisodeLog;
use crate::oracle::OracleLevel;
use crate::seed;
use crate::world::MapConfig;

/// Everything needed to set up one procedurally generated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub engine: EngineConfig,
    pub map: MapConfig,
    pub crew: usize,
    pub impostors: usize,
    pub oracle_level: OracleLevel,
    pub seed: u64,
}

/// Policy binding by role, with optional per-player overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Bindings {
    pub crew: String,
    pub impostor: String,
    pub overrides: BTreeMap<AgentId, String>,
    pub timeout: Duration,
}

/// Builds a policy from a builtin name (`oracle`, `random+skip`, ...) or a
/// remote endpoint (`tcp://host:port`, `exec:cmd args`).
pub fn make_policy(binding: &str, seed: u64, timeout: Duration) -> Result<Box<dyn Policy>, String> {
    if binding.starts_with("tcp://") || binding.starts_with("exec:") {
        let endpoint: Endpoint = binding.parse()?;
        Ok(Box::new(RemotePolicy::new(endpoint, timeout)))
    } else {
        let spec: BuiltinSpec = binding.parse()?;
        Ok(Box::new(ScriptedPolicy::new(spec, seed)))
    }
}

/// One policy per player of `state`, chosen by role and overrides.
pub fn bind_policies(state: &GameState, bindings: &Bindings, seed: u64) -> Result<Vec<Box<dyn Policy>>, String> {
    state
        .agents
        .iter()
        .map(|a| {
            let name = bindings.overrides.get(&a.id).unwrap_or(match a.role {
                Role::Crewmate => &bindings.crew,
                Role::Impostor => &bindings.impostor,
            });
            make_policy(name, seed::derive_indexed(seed, "agent", a.id.0 as u64), bindings.timeout)
        })
        .collect()
}

/// Runs requests for several agents, concurrently when any policy is
/// remote. Results come back in the order of `jobs`.
fn collect<T, R, F>(policies: &mut [Box<dyn Policy>], jobs: Vec<(AgentId, T)>, f: F) -> Vec<(AgentId, Result<R, AgentFault>)>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&mut dyn Policy, &T) -> Result<R, AgentFault> + Sync,
{
    let concurrent = jobs.iter().any(|(id, _)| policies[id.0].is_remote());
    let mut slots: Vec<Option<&mut Box<dyn Policy>>> = policies.iter_mut().map(Some).collect();
    let mut work: Vec<(AgentId, &T, &mut Box<dyn Policy>)> = Vec::with_capacity(jobs.len());
    for (id, payload) in &jobs {
        let p = slots[id.0].take().expect("one job per agent");
        work.push((*id, payload, p));
    }
    if !concurrent {
        return work.into_iter().map(|(id, payload, p)| (id, f(p.as_mut(), payload))).collect();
    }
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = work
            .into_iter()
            .map(|(id, payload, p)| s.spawn(move || (id, f(p.as_mut(), payload))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("policy thread panicked")).collect()
    })
}

/// Plays `state` to completion with one policy per player and returns the
/// finished log.
pub fn run_episode(mut state: GameState, policies: &mut [Box<dyn Policy>], level: OracleLevel) -> EpisodeLog {
    assert_eq!(policies.len(), state.agents.len(), "one policy per player");
    let labels: Vec<String> = policies.iter().map(|p| p.label()).collect();
    state.start(&labels);
    let mut last_decision: Vec<Option<u64>> = vec![None; state.agents.len()];

    while !state.is_over() {
        match state.phase {
            Phase::Task => {
                let jobs: Vec<_> = state
                    .alive_ids()
                    .into_iter()
                    .map(|id| (id, build_observation(&state, id, level, last_decision[id.0])))
                    .collect();
                let replies = collect(policies, jobs, |p, obs| p.decide(obs));
                let mut intents = BTreeMap::new();
                for (id, reply) in replies {
                    last_decision[id.0] = Some(state.env_step);
                    let intent = match reply {
                        Ok(Decision { thought, action }) => Intent { code: action, thought },
                        Err(fault) => {
                            state.record_violation(id, fault.code, fault.detail);
                            Intent::from(Action::Noop)
                        }
                    };
                    intents.insert(id, intent);
                }
                state.advance_macro_step(&intents).expect("task phase");
            }
            Phase::Voting => {
                let jobs: Vec<_> =
                    state.alive_ids().into_iter().map(|id| (id, build_voting_observation(&state, id))).collect();
                let replies = collect(policies, jobs, |p, obs| p.vote(obs));
                let mut votes = Vec::new();
                for (id, reply) in replies {
                    match reply {
                        Ok(VoteDecision { thought, vote, trust_scores }) => votes.push(VoteRecord {
                            target: vote,
                            trust_scores,
                            thought,
                            ..VoteRecord::skip(id)
                        }),
                        Err(fault) => {
                            state.record_violation(id, fault.code, fault.detail);
                            votes.push(VoteRecord::skip(id));
                        }
                    }
                }
                state.run_voting_phase(votes).expect("voting phase");
            }
            Phase::Over => break,
        }
    }
    state.finish();
    EpisodeLog { records: state.log }
}

/// Generates the episode described by `spec`, binds policies, and runs it.
pub fn run_generated(spec: &EpisodeSpec, bindings: &Bindings) -> Result<EpisodeLog, RunError> {
    let state = GameState::generate(spec.engine.clone(), &spec.map, spec.crew, spec.impostors, spec.seed)?;
    let mut policies = bind_policies(&state, bindings, spec.seed).map_err(RunError::Binding)?;
    Ok(run_episode(state, &mut policies, spec.oracle_level))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("policy binding: {0}")]
    Binding(String),
}
