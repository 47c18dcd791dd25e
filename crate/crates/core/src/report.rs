//! Reports computed from logs alone: metrics, failure diagnostics, and the
//! vote-reasoning table. `run` and `analyze` share this code path so both
//! produce identical output for the same logs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    detect_failures, failure_step_fraction, reason_accuracy_table, DetectorParams, FailureFlag, FailureKind, ReasonTable,
};
use crate::log::EpisodeLog;
use crate::metrics::{metrics_report, MetricsReport, TaskWeighting};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDiagnostics {
    pub seed: Option<u64>,
    pub flags: Vec<FailureFlag>,
    pub step_fraction: BTreeMap<FailureKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: DetectorParams,
    pub episodes: Vec<EpisodeDiagnostics>,
    /// Per policy label, share of its agents' actions flagged per kind.
    pub profile: BTreeMap<String, BTreeMap<FailureKind, f64>>,
    pub reasoning: ReasonTable,
}

pub fn diagnostics_report(logs: &[EpisodeLog], params: &DetectorParams) -> DiagnosticsReport {
    let mut episodes = Vec::new();
    let mut flagged: BTreeMap<String, BTreeMap<FailureKind, usize>> = BTreeMap::new();
    let mut actions: BTreeMap<String, usize> = BTreeMap::new();
    for log in logs {
        let flags = detect_failures(log, params);
        let step_fraction = failure_step_fraction(log, &flags);
        if let Some(h) = log.header() {
            for a in &h.agents {
                *actions.entry(a.policy.clone()).or_default() += log.steps_of(a.id).count();
                let per_kind = flagged.entry(a.policy.clone()).or_default();
                for f in flags.iter().filter(|f| f.agent == a.id) {
                    *per_kind.entry(f.kind).or_default() += f.actions.1 - f.actions.0 + 1;
                }
            }
        }
        episodes.push(EpisodeDiagnostics { seed: log.header().map(|h| h.seed), flags, step_fraction });
    }
    let profile = actions
        .iter()
        .map(|(policy, &n)| {
            let per_kind = &flagged[policy];
            let row = FailureKind::ALL
                .into_iter()
                .map(|k| {
                    let f = per_kind.get(&k).copied().unwrap_or(0);
                    (k, if n == 0 { 0.0 } else { f as f64 / n as f64 })
                })
                .collect();
            (policy.clone(), row)
        })
        .collect();
    DiagnosticsReport { params: *params, episodes, profile, reasoning: reason_accuracy_table(logs) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metrics: MetricsReport,
    pub diagnostics: DiagnosticsReport,
}

pub fn analyze_logs(logs: &[EpisodeLog], weighting: TaskWeighting, params: &DetectorParams) -> AnalysisReport {
    AnalysisReport { metrics: metrics_report(logs, weighting), diagnostics: diagnostics_report(logs, params) }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no episode logs found in {0}")]
    NoData(PathBuf),
}

#[derive(Debug, Default)]
pub struct LoadedLogs {
    /// Logs in file-name order.
    pub logs: Vec<(PathBuf, EpisodeLog)>,
    /// Unparseable lines per file.
    pub skipped: BTreeMap<PathBuf, usize>,
}

/// Reads every `*.jsonl` file in `dir`, sorted by name. Lines that fail
/// to parse are skipped and counted.
pub fn load_log_dir(dir: &Path) -> Result<LoadedLogs, LoadError> {
    let io = |source| LoadError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = LoadedLogs::default();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
        let parsed = EpisodeLog::parse(&text);
        if parsed.skipped > 0 {
            out.skipped.insert(path.clone(), parsed.skipped);
        }
        if parsed.log.header().is_some() {
            out.logs.push((path, parsed.log));
        }
    }
    if out.logs.is_empty() {
        return Err(LoadError::NoData(dir.to_path_buf()));
    }
    Ok(out)
}
