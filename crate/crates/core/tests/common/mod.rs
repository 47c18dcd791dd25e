//! Independent reference implementations used by the integration tests and
//! the acceptance harness. Nothing here calls the planner or the metric
//! code under test: maps are rebuilt from the logged glyph rows and every
//! value is recomputed from raw JSON.

#![allow(dead_code)]

pub mod fixtures;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener};
use std::thread;

use serde_json::{json, Value};

pub type Xy = (i32, i32);

/// Right, Down, Left, Up as wire codes 100..=103.
pub fn delta(dir: u16) -> Xy {
    match dir {
        100 => (1, 0),
        101 => (0, 1),
        102 => (-1, 0),
        103 => (0, -1),
        _ => panic!("bad direction {dir}"),
    }
}

fn cw(dir: u16) -> u16 {
    100 + (dir - 100 + 1) % 4
}

fn ccw(dir: u16) -> u16 {
    100 + (dir - 100 + 3) % 4
}

fn rev(dir: u16) -> u16 {
    100 + (dir - 100 + 2) % 4
}

fn add(a: Xy, d: Xy) -> Xy {
    (a.0 + d.0, a.1 + d.1)
}

/// Grid rebuilt from glyph rows.
#[derive(Clone, Debug)]
pub struct Grid {
    pub rows: Vec<Vec<char>>,
}

impl Grid {
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Self {
        Self { rows: rows.iter().map(|r| r.as_ref().chars().collect()).collect() }
    }

    pub fn at(&self, (x, y): Xy) -> char {
        if x < 0 || y < 0 {
            return '#';
        }
        self.rows.get(y as usize).and_then(|r| r.get(x as usize)).copied().unwrap_or('#')
    }

    pub fn floor_cells(&self) -> Vec<Xy> {
        let mut out = Vec::new();
        for (y, r) in self.rows.iter().enumerate() {
            for (x, &c) in r.iter().enumerate() {
                if c == '.' {
                    out.push((x as i32, y as i32));
                }
            }
        }
        out
    }

    pub fn cells_with(&self, glyph: char) -> Vec<Xy> {
        let mut out = Vec::new();
        for (y, r) in self.rows.iter().enumerate() {
            for (x, &c) in r.iter().enumerate() {
                if c == glyph {
                    out.push((x as i32, y as i32));
                }
            }
        }
        out
    }
}

/// Breadth-first search over (position, facing, doors opened so far).
/// Every action costs 1: four moves, three turns, and opening the closed
/// door straight ahead. Success means standing anywhere with `target`
/// directly ahead.
pub fn bfs_cost(grid: &Grid, start: Xy, facing: u16, target: Xy) -> Option<u32> {
    type State = (Xy, u16, BTreeSet<Xy>);
    let enterable = |c: Xy, opened: &BTreeSet<Xy>| match grid.at(c) {
        '.' | 'O' => true,
        'D' => opened.contains(&c),
        _ => false,
    };
    let start_state: State = (start, facing, BTreeSet::new());
    let mut seen: HashSet<State> = HashSet::from([start_state.clone()]);
    let mut queue = VecDeque::from([(start_state, 0u32)]);
    while let Some(((pos, dir, opened), cost)) = queue.pop_front() {
        if add(pos, delta(dir)) == target {
            return Some(cost);
        }
        let mut next: Vec<State> = Vec::new();
        for d in [dir, rev(dir), cw(dir), ccw(dir)] {
            let c = add(pos, delta(d));
            if enterable(c, &opened) {
                next.push((c, dir, opened.clone()));
            }
        }
        for d in [ccw(dir), cw(dir), rev(dir)] {
            next.push((pos, d, opened.clone()));
        }
        let front = add(pos, delta(dir));
        if grid.at(front) == 'D' && !opened.contains(&front) {
            let mut o = opened.clone();
            o.insert(front);
            next.push((pos, dir, o));
        }
        for s in next {
            if seen.insert(s.clone()) {
                queue.push_back((s, cost + 1));
            }
        }
    }
    None
}

/// Applies a plan's action codes under the same rules; returns the final
/// (position, facing) or `None` if an action is not applicable.
pub fn replay_plan(grid: &Grid, start: Xy, facing: u16, codes: &[u8]) -> Option<(Xy, u16)> {
    let mut pos = start;
    let mut dir = facing;
    let mut opened: BTreeSet<Xy> = BTreeSet::new();
    for &code in codes {
        let mv = |d: u16| {
            let c = add(pos, delta(d));
            match grid.at(c) {
                '.' | 'O' => Some(c),
                'D' if opened.contains(&c) => Some(c),
                _ => None,
            }
        };
        match code {
            0 => pos = mv(dir)?,
            1 => pos = mv(rev(dir))?,
            2 => pos = mv(cw(dir))?,
            3 => pos = mv(ccw(dir))?,
            4 => dir = ccw(dir),
            5 => dir = cw(dir),
            6 => dir = rev(dir),
            9 => {
                let front = add(pos, delta(dir));
                if grid.at(front) != 'D' || !opened.insert(front) {
                    return None;
                }
            }
            _ => return None,
        }
    }
    Some((pos, dir))
}

pub fn xy(v: &Value) -> Xy {
    (v[0].as_i64().unwrap() as i32, v[1].as_i64().unwrap() as i32)
}

pub fn records(jsonl: &str) -> Vec<Value> {
    jsonl.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn of_kind<'a>(recs: &'a [Value], kind: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
    recs.iter().filter(move |r| r["kind"] == kind)
}

pub fn header(recs: &[Value]) -> &Value {
    &of_kind(recs, "header").next().expect("header")["payload"]
}

pub fn roles(recs: &[Value]) -> BTreeMap<String, String> {
    header(recs)["agents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["id"].as_str().unwrap().to_string(), a["role"].as_str().unwrap().to_string()))
        .collect()
}

/// Recomputed per-agent metric values. `None` mirrors "undefined".
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RefMetrics {
    pub tp: Option<f64>,
    pub psr: Option<f64>,
    pub pp: Option<f64>,
    pub brier: BTreeMap<String, f64>,
    pub volatility: BTreeMap<String, f64>,
    pub da: Option<f64>,
}

/// Task performance weighted by each station's logged weight, planning
/// success, planning performance against BFS optimal lengths from spawn,
/// trust Brier and volatility per target, and detection accuracy.
pub fn reference_metrics(jsonl: &str) -> BTreeMap<String, RefMetrics> {
    let recs = records(jsonl);
    let h = header(&recs);
    let grid = Grid::from_rows(&h["map"]["rows"].as_array().unwrap().iter().map(|r| r.as_str().unwrap()).collect::<Vec<_>>());
    let stations: BTreeMap<String, &Value> =
        h["map"]["stations"].as_array().unwrap().iter().map(|s| (s["id"].as_str().unwrap().to_string(), s)).collect();
    let roles = roles(&recs);
    let mut out = BTreeMap::new();
    for a in h["agents"].as_array().unwrap() {
        let id = a["id"].as_str().unwrap().to_string();
        let spawn = xy(&a["pose"]["cell"]);
        let facing = a["pose"]["facing"].as_u64().unwrap() as u16;
        let tasks: Vec<&Value> = a["tasks"].as_array().unwrap().iter().map(|t| stations[t.as_str().unwrap()]).collect();
        let mut m = RefMetrics::default();

        let mut own = 0u64;
        let mut reached: BTreeSet<String> = BTreeSet::new();
        let mut done_at: BTreeMap<String, u64> = BTreeMap::new();
        for t in &tasks {
            if add(spawn, delta(facing)) == xy(&t["position"]) {
                reached.insert(t["id"].as_str().unwrap().to_string());
            }
        }
        for r in of_kind(&recs, "step").filter(|r| r["payload"]["agent"] == id.as_str()) {
            let p = &r["payload"];
            own += 1;
            let front = add(xy(&p["to"]["cell"]), delta(p["to"]["facing"].as_u64().unwrap() as u16));
            for t in &tasks {
                if front == xy(&t["position"]) {
                    reached.insert(t["id"].as_str().unwrap().to_string());
                }
            }
            if p["task"]["complete"] == true {
                done_at.entry(p["task"]["station"].as_str().unwrap().to_string()).or_insert(own);
            }
        }
        if !tasks.is_empty() {
            let wsum: f64 = tasks.iter().map(|t| t["weight"].as_f64().unwrap()).sum();
            let wdone: f64 = tasks
                .iter()
                .filter(|t| done_at.contains_key(t["id"].as_str().unwrap()))
                .map(|t| t["weight"].as_f64().unwrap())
                .sum();
            m.tp = Some(wdone / wsum);
            m.psr = Some(reached.len() as f64 / tasks.len() as f64);
            let pes: Vec<f64> = tasks
                .iter()
                .filter_map(|t| {
                    let n = *done_at.get(t["id"].as_str().unwrap())?;
                    let opt = bfs_cost(&grid, spawn, facing, xy(&t["position"]))? + t["required_toggles"].as_u64().unwrap() as u32;
                    Some((opt as f64 / n as f64).min(1.0))
                })
                .collect();
            m.pp = Some(if pes.is_empty() { 0.0 } else { pes.iter().sum::<f64>() / pes.len() as f64 });
        }

        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let (mut non_skip, mut hits) = (0u32, 0u32);
        for r in of_kind(&recs, "vote_round") {
            for v in r["payload"]["votes"].as_array().unwrap().iter().filter(|v| v["voter"] == id.as_str()) {
                for (t, x) in v["trust_scores"].as_object().unwrap() {
                    series.entry(t.clone()).or_default().push(x.as_f64().unwrap());
                }
                let target = v["target"].as_str().unwrap();
                if target != "skip" {
                    non_skip += 1;
                    hits += (roles[target] == "impostor") as u32;
                }
            }
        }
        for (t, s) in &series {
            let y = if roles[t] == "impostor" { 1.0 } else { 0.0 };
            m.brier.insert(t.clone(), s.iter().map(|x| (1.0 - x - y) * (1.0 - x - y)).sum::<f64>() / s.len() as f64);
            if s.len() >= 2 {
                let mut total = 0.0;
                for k in 1..s.len() {
                    total += (s[k] - s[k - 1]).abs();
                }
                m.volatility.insert(t.clone(), total / (s.len() - 1) as f64);
            }
        }
        if roles[&id] == "crewmate" && non_skip > 0 {
            m.da = Some(hits as f64 / non_skip as f64);
        }
        out.insert(id, m);
    }
    out
}

/// The reward table keyed by (kind, role), written out independently.
pub fn reward_table(kind: &str, role: &str) -> Option<f64> {
    let crew = role == "crewmate";
    Some(match kind {
        "task_toggle" if crew => 0.2,
        "common_task_done" if crew => 1.0,
        "short_task_done" if crew => 2.0,
        "long_task_done" if crew => 3.0,
        "kill_killer" if !crew => 6.0,
        "kill_victim" if crew => -6.0,
        "step_penalty" => {
            if crew {
                -0.001
            } else {
                -0.005
            }
        }
        "vote_impostor_correct" if crew => 3.0,
        "vote_crew_wrong" if crew => -2.0,
        "skip_vote" => 0.05,
        "ejected_impostor" if !crew => -3.0,
        "ejected_crew" if crew => -2.0,
        "crew_ejected_bonus" if !crew => 2.0,
        "game_win" => 10.0,
        "game_loss" => -10.0,
        _ => return None,
    })
}

/// Replays a log's events and derives the reward events they must have
/// produced, as a sorted multiset of (agent, kind) pairs. Checks that
/// every logged amount matches the table. Returns (expected, logged).
pub fn replay_rewards(jsonl: &str) -> (Vec<(String, String)>, Vec<(String, String)>) {
    let recs = records(jsonl);
    let roles = roles(&recs);
    let kinds: BTreeMap<String, String> = header(&recs)["map"]["stations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["id"].as_str().unwrap().to_string(), s["kind"].as_str().unwrap().to_string()))
        .collect();
    let mut alive_imps: BTreeSet<String> = roles.iter().filter(|(_, r)| *r == "impostor").map(|(a, _)| a.clone()).collect();
    let mut expected = Vec::new();
    let mut logged = Vec::new();
    for r in &recs {
        let p = &r["payload"];
        match r["kind"].as_str().unwrap() {
            "step" => {
                let a = p["agent"].as_str().unwrap().to_string();
                if p["task"].is_object() {
                    expected.push((a.clone(), "task_toggle".to_string()));
                    if p["task"]["complete"] == true {
                        expected.push((a.clone(), format!("{}_task_done", kinds[p["task"]["station"].as_str().unwrap()])));
                    }
                }
                expected.push((a, "step_penalty".to_string()));
            }
            "kill" => {
                expected.push((p["killer"].as_str().unwrap().to_string(), "kill_killer".into()));
                expected.push((p["victim"].as_str().unwrap().to_string(), "kill_victim".into()));
            }
            "vote_round" => {
                for v in p["votes"].as_array().unwrap() {
                    let voter = v["voter"].as_str().unwrap().to_string();
                    let target = v["target"].as_str().unwrap();
                    if target == "skip" {
                        expected.push((voter, "skip_vote".into()));
                    } else if roles[&voter] == "crewmate" {
                        let k = if roles[target] == "impostor" { "vote_impostor_correct" } else { "vote_crew_wrong" };
                        expected.push((voter, k.into()));
                    }
                }
            }
            "ejection" => {
                let e = p["agent"].as_str().unwrap().to_string();
                if roles[&e] == "impostor" {
                    alive_imps.remove(&e);
                    expected.push((e, "ejected_impostor".into()));
                } else {
                    expected.push((e, "ejected_crew".into()));
                    for i in &alive_imps {
                        expected.push((i.clone(), "crew_ejected_bonus".into()));
                    }
                }
            }
            "termination" => {
                let winner = p["winner"].as_str().unwrap();
                for (a, role) in &roles {
                    let team = if role == "crewmate" { "crew" } else { "impostors" };
                    expected.push((a.clone(), if team == winner { "game_win" } else { "game_loss" }.into()));
                }
            }
            "reward" => {
                let a = p["agent"].as_str().unwrap().to_string();
                let k = p["kind"].as_str().unwrap().to_string();
                let want = reward_table(&k, &roles[&a]).unwrap_or_else(|| panic!("{k} not defined for {a}"));
                assert_eq!(p["amount"].as_f64().unwrap(), want, "amount of {k} for {a}");
                logged.push((a, k));
            }
            _ => {}
        }
    }
    expected.sort();
    logged.sort();
    (expected, logged)
}

/// What a scripted mock agent does on one request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Reply with the first suggested (or allowed) action / a skip vote.
    Ok,
    /// Never reply to this request.
    Silent,
    /// Reply with a line that is not valid JSON.
    Garbage,
    /// Reply with valid JSON of the wrong shape.
    WrongShape,
    /// Reply with an action code outside the allowed set.
    Illegal,
}

/// Starts a TCP mock agent. The fault for a request is `script[seq % len]`
/// where `seq` is the request's own sequence number, so behavior depends
/// only on the request stream.
pub fn spawn_mock_agent(script: Vec<Fault>) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let script = script.clone();
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { break };
                    let req: Value = serde_json::from_str(&line).unwrap();
                    let seq = req["seq"].as_u64().unwrap() as usize;
                    let fault = script[seq % script.len()];
                    let reply = match (fault, req["type"].as_str().unwrap()) {
                        (Fault::Silent, _) => continue,
                        (Fault::Garbage, _) => "{{not json".to_string(),
                        (Fault::WrongShape, _) => json!({"answer": 42}).to_string(),
                        (Fault::Illegal, "decide") => json!({"thought": "bad", "action": 99}).to_string(),
                        (Fault::Illegal, _) => json!({"thought": "bad", "vote": "Player_99", "trust_scores": {}}).to_string(),
                        (Fault::Ok, "decide") => {
                            let me = &req["observation"]["SELF_INFORMATION"];
                            let pick = me["BEST_ACTION_SUGGESTION"]
                                .as_array()
                                .and_then(|a| a.first())
                                .or_else(|| me["ALLOWED_ACTIONS"].as_array().and_then(|a| a.first()))
                                .and_then(Value::as_u64)
                                .unwrap_or(7);
                            json!({"thought": "ok", "action": pick}).to_string()
                        }
                        (Fault::Ok, _) => json!({"thought": "ok", "vote": "skip", "trust_scores": {}}).to_string(),
                    };
                    if writer.write_all(reply.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                        break;
                    }
                }
            });
        }
    });
    addr
}
