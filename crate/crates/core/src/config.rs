//! Run configuration: one TOML file covering map, engine, policies,
//! detectors, win-lean, and league settings.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::action::AgentId;
use crate::diagnostics::DetectorParams;
use crate::engine::EngineConfig;
use crate::league::{EloParams, LeagueSpec, Pattern, WinLeanParams};
use crate::metrics::TaskWeighting;
use crate::oracle::OracleLevel;
use crate::runner::{Bindings, EpisodeSpec};
use crate::seed;
use crate::world::MapConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Builtin name (`oracle`, `random+skip`, ...) or endpoint
    /// (`tcp://host:port`, `exec:cmd args`).
    pub crew: String,
    pub impostor: String,
    pub overrides: BTreeMap<AgentId, String>,
    pub timeout_ms: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { crew: "oracle".into(), impostor: "stealth".into(), overrides: BTreeMap::new(), timeout_ms: 240_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeagueConfig {
    pub policies: Vec<String>,
    pub episodes_per_matchup: usize,
    pub patterns: Vec<Pattern>,
}

impl Default for LeagueConfig {
    fn default() -> Self {
        let pattern = |name: &str, room_size| Pattern { name: name.into(), map: MapConfig { room_size, ..MapConfig::default() } };
        Self {
            policies: ["oracle", "stealth", "random", "idle", "oracle+random", "random+lowest-trust"]
                .map(String::from)
                .to_vec(),
            episodes_per_matchup: 2,
            patterns: vec![pattern("10x10_2x2", 10), pattern("14x14_2x2", 14)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub episodes: usize,
    /// Episodes run concurrently.
    pub parallel: usize,
    pub crew: usize,
    pub impostors: usize,
    pub oracle_level: OracleLevel,
    pub task_weighting: TaskWeighting,
    pub map: MapConfig,
    pub engine: EngineConfig,
    pub policies: PolicyConfig,
    pub detectors: DetectorParams,
    pub win_lean: WinLeanParams,
    pub elo: EloParams,
    pub league: LeagueConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 1,
            parallel: 1,
            crew: 5,
            impostors: 2,
            oracle_level: OracleLevel::High,
            task_weighting: TaskWeighting::default(),
            map: MapConfig::default(),
            engine: EngineConfig::default(),
            policies: PolicyConfig::default(),
            detectors: DetectorParams::default(),
            win_lean: WinLeanParams::default(),
            elo: EloParams::default(),
            league: LeagueConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a file, or the defaults for the literal path `default`.
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        if path == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.crew == 0 {
            return bad("crew must be >= 1");
        }
        if self.episodes == 0 {
            return bad("episodes must be >= 1");
        }
        if self.parallel == 0 {
            return bad("parallel must be >= 1");
        }
        if self.engine.env_steps_per_macro == 0 || self.engine.max_macro_steps == 0 {
            return bad("engine step counts must be >= 1");
        }
        let w = &self.win_lean;
        if !(w.w_task > 0.0 && w.w_alive > 0.0 && w.w_detect > 0.0 && w.alpha > 0.0) {
            return bad("win_lean weights must be positive");
        }
        if let Some(id) = self.policies.overrides.keys().find(|id| id.0 >= self.crew + self.impostors) {
            return Err(ConfigError::Invalid(format!("override for unknown player {id}")));
        }
        Ok(())
    }

    pub fn episode_seed(&self, index: usize) -> u64 {
        seed::derive_indexed(self.seed, "episode", index as u64)
    }

    pub fn episode_spec(&self, index: usize) -> EpisodeSpec {
        EpisodeSpec {
            engine: self.engine.clone(),
            map: self.map.clone(),
            crew: self.crew,
            impostors: self.impostors,
            oracle_level: self.oracle_level,
            seed: self.episode_seed(index),
        }
    }

    pub fn bindings(&self) -> Bindings {
        Bindings {
            crew: self.policies.crew.clone(),
            impostor: self.policies.impostor.clone(),
            overrides: self.policies.overrides.clone(),
            timeout: Duration::from_millis(self.policies.timeout_ms),
        }
    }

    pub fn league_spec(&self) -> LeagueSpec {
        LeagueSpec {
            policies: self.league.policies.clone(),
            patterns: self.league.patterns.clone(),
            episodes_per_matchup: self.league.episodes_per_matchup,
            seed: self.seed,
            engine: self.engine.clone(),
            crew: self.crew,
            impostors: self.impostors,
            oracle_level: self.oracle_level,
            timeout: Duration::from_millis(self.policies.timeout_ms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.policies.overrides.insert(AgentId(3), "tcp://127.0.0.1:9000".into());
        cfg.seed = 42;
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[map]\nroom_rows = 3\n[engine]\nmax_macro_steps = 20\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.map.room_rows, 3);
        assert_eq!(cfg.map.room_size, 10);
        assert_eq!(cfg.engine.max_macro_steps, 20);
        assert_eq!(cfg.engine.vision_radius, 4);
        assert_eq!(cfg.crew + cfg.impostors, 7);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml("sede = 7").is_err());
    }
}
