//! Bridge to external agents speaking newline-delimited JSON.
//!
//! Each request is one line `{"type":"decide"|"vote","seq":n,"observation":{..}}`
//! and expects one reply line: `{"thought":..,"action":<int>}` for decide,
//! `{"thought":..,"vote":"Player_k"|"skip","trust_scores":{..}}` for vote.
//! A failed exchange is retried once on a fresh connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::agents::observation::{Observation, VotingObservation};
use crate::agents::policy::{AgentFault, Decision, Policy, VoteDecision};
use crate::log::ViolationCode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `exec:program arg...`, spoken to over stdin/stdout.
    Exec(Vec<String>),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err("empty tcp address".into());
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err("empty exec command".into());
            }
            Ok(Endpoint::Exec(argv))
        } else {
            Err(format!("endpoint must start with tcp:// or exec:, got {s:?}"))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Exec(argv) => write!(f, "exec:{}", argv.join(" ")),
        }
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    stream: Option<TcpStream>,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(s) = &self.stream {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(c) = &mut self.child {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn spawn_reader<R: std::io::Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Connection, AgentFault> {
    let fault = |e: std::io::Error| AgentFault::new(ViolationCode::Connect, format!("{endpoint}: {e}"));
    match endpoint {
        Endpoint::Tcp(addr) => {
            let sock = addr
                .to_socket_addrs()
                .map_err(fault)?
                .next()
                .ok_or_else(|| AgentFault::new(ViolationCode::Connect, format!("{endpoint}: no address")))?;
            let stream = TcpStream::connect_timeout(&sock, timeout).map_err(fault)?;
            stream.set_nodelay(true).map_err(fault)?;
            let lines = spawn_reader(stream.try_clone().map_err(fault)?);
            let writer = Box::new(stream.try_clone().map_err(fault)?);
            Ok(Connection { writer, lines, stream: Some(stream), child: None })
        }
        Endpoint::Exec(argv) => {
            let mut child = Command::new(&argv[0])
                .args(&argv[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(fault)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok(Connection { writer: Box::new(stdin), lines: spawn_reader(stdout), stream: None, child: Some(child) })
        }
    }
}

pub struct RemotePolicy {
    endpoint: Endpoint,
    timeout: Duration,
    conn: Option<Connection>,
    seq: u64,
}

impl RemotePolicy {
    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        Self { endpoint, timeout, conn: None, seq: 0 }
    }

    fn exchange(&mut self, line: &str) -> Result<String, AgentFault> {
        if self.conn.is_none() {
            self.conn = Some(connect(&self.endpoint, self.timeout)?);
        }
        let conn = self.conn.as_mut().expect("connected");
        let sent = conn.writer.write_all(line.as_bytes()).and_then(|_| conn.writer.write_all(b"\n")).and_then(|_| conn.writer.flush());
        if let Err(e) = sent {
            self.conn = None;
            return Err(AgentFault::new(ViolationCode::Connect, format!("write failed: {e}")));
        }
        match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                self.conn = None;
                Err(AgentFault::new(ViolationCode::Connect, format!("read failed: {e}")))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.conn = None;
                Err(AgentFault::new(ViolationCode::Connect, "connection closed"))
            }
            Err(RecvTimeoutError::Timeout) => {
                // A late reply would desynchronize the stream; start over.
                self.conn = None;
                Err(AgentFault::new(ViolationCode::Timeout, format!("no reply within {:?}", self.timeout)))
            }
        }
    }

    fn call<T: DeserializeOwned, O: Serialize>(&mut self, kind: &str, obs: &O) -> Result<T, AgentFault> {
        let mut first: Option<AgentFault> = None;
        for _ in 0..2 {
            self.seq += 1;
            let line = json!({"type": kind, "seq": self.seq, "observation": obs}).to_string();
            let fault = match self.exchange(&line) {
                Ok(reply) => match serde_json::from_str::<T>(reply.trim()) {
                    Ok(v) => return Ok(v),
                    Err(e) => AgentFault::new(ViolationCode::Malformed, format!("{e}: {}", truncate(&reply, 120))),
                },
                Err(f) => f,
            };
            match &first {
                None => first = Some(fault),
                Some(f) => {
                    return Err(AgentFault::new(fault.code, format!("{}; retry: {}", f.detail, fault.detail)));
                }
            }
        }
        unreachable!("two attempts always return")
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

impl Policy for RemotePolicy {
    fn label(&self) -> String {
        self.endpoint.to_string()
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn decide(&mut self, obs: &Observation) -> Result<Decision, AgentFault> {
        self.call("decide", obs)
    }

    fn vote(&mut self, obs: &VotingObservation) -> Result<VoteDecision, AgentFault> {
        self.call("vote", obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!("tcp://127.0.0.1:9000".parse(), Ok(Endpoint::Tcp("127.0.0.1:9000".into())));
        assert_eq!("exec:python3 agent.py".parse(), Ok(Endpoint::Exec(vec!["python3".into(), "agent.py".into()])));
        assert!("http://x".parse::<Endpoint>().is_err());
        assert!("exec:".parse::<Endpoint>().is_err());
    }

    #[test]
    fn decision_schema() {
        let d: Decision = serde_json::from_str(r#"{"thought":"t","action":7}"#).unwrap();
        assert_eq!(d, Decision { thought: "t".into(), action: 7 });
        assert!(serde_json::from_str::<Decision>(r#"{"thought":"t","action":"seven"}"#).is_err());
        assert!(serde_json::from_str::<Decision>(r#"{"thought":"t","action":300}"#).is_err());
        let v: VoteDecision =
            serde_json::from_str(r#"{"thought":"x","vote":"Player_2","trust_scores":{"Player_0":0.9}}"#).unwrap();
        assert_eq!(v.vote, crate::engine::VoteTarget::Player(crate::action::AgentId(2)));
    }
}
