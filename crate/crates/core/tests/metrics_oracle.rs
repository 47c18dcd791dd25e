mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use socialgrid::metrics::{
    detection_accuracy, planning_performance, planning_success_rate, task_performance, trust_brier, trust_volatility,
    TaskWeighting,
};
use socialgrid::oracle::OracleLevel;
use socialgrid::runner::{run_generated, Bindings, EpisodeSpec};
use socialgrid::{AgentId, EngineConfig, EpisodeLog, MapConfig};

const TOL: f64 = 1e-12;

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= TOL,
        (None, None) => true,
        _ => false,
    }
}

pub fn episode(seed: u64, crew: &str, imp: &str) -> EpisodeLog {
    let spec = EpisodeSpec {
        engine: EngineConfig { max_macro_steps: 120, voting_interval: 100, ..EngineConfig::default() },
        map: MapConfig::default(),
        crew: 5,
        impostors: 2,
        oracle_level: OracleLevel::High,
        seed,
    };
    let b = Bindings { crew: crew.into(), impostor: imp.into(), overrides: BTreeMap::new(), timeout: Duration::from_secs(1) };
    run_generated(&spec, &b).unwrap()
}

fn check(log: &EpisodeLog) {
    let text = log.to_jsonl();
    let reference = common::reference_metrics(&text);
    for (name, r) in &reference {
        let id: AgentId = name.parse().unwrap();
        assert!(close(task_performance(log, id, TaskWeighting::Reward), r.tp), "TP {name}");
        assert!(close(planning_success_rate(log, id), r.psr), "PSR {name}");
        assert!(close(planning_performance(log, id), r.pp), "PP {name}");
        assert!(close(detection_accuracy(log, id), r.da), "DA {name}");
        for other in reference.keys().filter(|o| *o != name) {
            let t: AgentId = other.parse().unwrap();
            assert!(close(trust_brier(log, id, t), r.brier.get(other).copied()), "Brier {name}->{other}");
            assert!(close(trust_volatility(log, id, t), r.volatility.get(other).copied()), "Vol {name}->{other}");
        }
    }
}

#[test]
fn metrics_match_reference_across_policy_mixes() {
    let mixes = [("oracle", "stealth"), ("random", "random"), ("oracle+random", "oracle"), ("random+lowest-trust", "idle")];
    for seed in 0..12u64 {
        let (c, i) = mixes[seed as usize % mixes.len()];
        check(&episode(seed, c, i));
    }
}

#[test]
fn reference_sees_non_trivial_values() {
    let log = episode(5, "random", "random");
    let r = common::reference_metrics(&log.to_jsonl());
    assert!(r.values().any(|m| m.da.is_some()));
    assert!(r.values().any(|m| !m.volatility.is_empty() || !m.brier.is_empty()));
}
