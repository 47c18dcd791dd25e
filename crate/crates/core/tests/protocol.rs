mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use common::{spawn_mock_agent, Fault};
use proptest::prelude::*;
use socialgrid::agents::Decision;
use socialgrid::log::{EpisodeLog, ViolationCode};
use socialgrid::oracle::OracleLevel;
use socialgrid::runner::{run_generated, Bindings, EpisodeSpec};
use socialgrid::{Action, AgentId, EngineConfig, MapConfig};

fn remote_episode(script: Vec<Fault>, seed: u64) -> EpisodeLog {
    remote_episode_at(spawn_mock_agent(script), seed)
}

fn remote_episode_at(addr: std::net::SocketAddr, seed: u64) -> EpisodeLog {
    let endpoint = format!("tcp://{addr}");
    let spec = EpisodeSpec {
        engine: EngineConfig { max_macro_steps: 20, voting_interval: 50, ..EngineConfig::default() },
        map: MapConfig::default(),
        crew: 3,
        impostors: 1,
        oracle_level: OracleLevel::High,
        seed,
    };
    let b = Bindings {
        crew: endpoint.clone(),
        impostor: endpoint,
        overrides: BTreeMap::new(),
        timeout: Duration::from_millis(400),
    };
    run_generated(&spec, &b).unwrap()
}

fn script() -> Vec<Fault> {
    use Fault::*;
    vec![Ok, Garbage, Ok, Illegal, Ok, WrongShape, Ok, Ok, Silent, Silent, Ok, Garbage, WrongShape, Ok]
}

#[test]
fn faults_are_coerced_and_logged() {
    let log = remote_episode(script(), 11);
    assert!(log.footer().is_some(), "episode ran to completion");
    let codes: Vec<ViolationCode> = log.violations().map(|v| v.code).collect();
    for want in [ViolationCode::Malformed, ViolationCode::IllegalAction, ViolationCode::Timeout] {
        assert!(codes.contains(&want), "missing {want:?} in {codes:?}");
    }
    // Each illegal or failed decision leaves a NOOP step behind.
    let noops = log.steps().filter(|(_, s)| s.executed == Action::Noop).count();
    assert!(noops >= codes.iter().filter(|c| **c == ViolationCode::IllegalAction).count());
}

#[test]
fn fault_script_replays_identically() {
    // Same endpoint string, so the logged policy labels agree too.
    let addr = spawn_mock_agent(script());
    let a = remote_episode_at(addr, 4).to_jsonl();
    let b = remote_episode_at(addr, 4).to_jsonl();
    assert_eq!(a, b);
}

#[test]
fn unreachable_endpoint_is_a_connect_violation() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let spec = EpisodeSpec {
        engine: EngineConfig { max_macro_steps: 3, ..EngineConfig::default() },
        map: MapConfig::default(),
        crew: 2,
        impostors: 1,
        oracle_level: OracleLevel::Low,
        seed: 1,
    };
    let mut overrides = BTreeMap::new();
    overrides.insert(AgentId(0), format!("tcp://{addr}"));
    let b = Bindings { crew: "oracle".into(), impostor: "idle".into(), overrides, timeout: Duration::from_millis(200) };
    let log = run_generated(&spec, &b).unwrap();
    assert!(log.violations().any(|v| v.code == ViolationCode::Connect && v.agent == AgentId(0)));
    assert!(log.footer().is_some());
}

proptest! {
    #[test]
    fn decision_round_trips(thought in ".*", action in any::<u8>()) {
        let d = Decision { thought, action };
        let back: Decision = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn agent_ids_round_trip(n in 0usize..10_000) {
        let id = AgentId(n);
        let text = serde_json::to_string(&id).unwrap();
        prop_assert_eq!(text.clone(), format!("\"Player_{n}\""));
        prop_assert_eq!(serde_json::from_str::<AgentId>(&text).unwrap(), id);
    }

    #[test]
    fn action_codes_round_trip(code in 0u8..14) {
        let a = Action::from_code(code).unwrap();
        prop_assert_eq!(serde_json::from_str::<Action>(&code.to_string()).unwrap(), a);
        prop_assert!(serde_json::from_str::<Action>(&(code + 14).to_string()).is_err());
    }
}

#[test]
fn log_records_round_trip_through_jsonl() {
    let log = remote_episode(vec![Fault::Ok], 2);
    let text = log.to_jsonl();
    let parsed = EpisodeLog::parse(&text);
    assert_eq!(parsed.skipped, 0);
    assert_eq!(parsed.log, log);
    assert_eq!(parsed.log.to_jsonl(), text);

    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(3, "{not json");
    lines.insert(7, "");
    let damaged = EpisodeLog::parse(&lines.join("\n"));
    assert_eq!(damaged.skipped, 1);
    assert_eq!(damaged.log, log);
}
