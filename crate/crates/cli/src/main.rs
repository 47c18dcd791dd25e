use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use socialgrid::config::RunConfig;
use socialgrid::league::{
    detection_matrix, elo_by_pattern, mean_trajectory, run_league, standings, win_matrices, Matchup, Standing,
};
use socialgrid::log::EpisodeLog;
use socialgrid::oracle::OracleLevel;
use socialgrid::replay::export_replay;
use socialgrid::report::{analyze_logs, load_log_dir, AnalysisReport};
use socialgrid::runner::run_generated;

const LOG_ROOT_ENV: &str = "SOCIALGRID_LOG_ROOT";

#[derive(Parser)]
#[command(name = "socialgrid", version, about = "Social-deduction gridworld runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes and write logs plus a metrics report.
    Run(RunArgs),
    /// Play every ordered policy pairing and write standings and matrices.
    League(LeagueArgs),
    /// Recompute reports from a directory of logs.
    Analyze(AnalyzeArgs),
    /// Export frames, trust series, and vote transcripts from one log.
    ReplayExport(ReplayArgs),
}

#[derive(Args)]
struct Overrides {
    /// Config file, or `default`.
    #[arg(long, default_value = "default")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    crew: Option<usize>,
    #[arg(long)]
    impostors: Option<usize>,
    #[arg(long)]
    oracle: Option<OracleLevel>,
    #[arg(long)]
    vision_radius: Option<u32>,
    #[arg(long)]
    max_macro_steps: Option<u64>,
    #[arg(long)]
    voting_interval: Option<u64>,
    #[arg(long)]
    kill_cooldown: Option<u64>,
    #[arg(long)]
    room_rows: Option<u32>,
    #[arg(long)]
    room_cols: Option<u32>,
    #[arg(long)]
    room_size: Option<u32>,
    /// Crew binding: builtin name or `tcp://host:port` / `exec:cmd`.
    #[arg(long)]
    crew_policy: Option<String>,
    #[arg(long)]
    impostor_policy: Option<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Output directory; defaults to a folder under $SOCIALGRID_LOG_ROOT
    /// (or `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { cfg.$($dst).+ = v; })*
            };
        }
        set! {
            seed => seed,
            crew => crew,
            impostors => impostors,
            oracle => oracle_level,
            vision_radius => engine.vision_radius,
            max_macro_steps => engine.max_macro_steps,
            voting_interval => engine.voting_interval,
            kill_cooldown => engine.kill_cooldown,
            room_rows => map.room_rows,
            room_cols => map.room_cols,
            room_size => map.room_size,
            crew_policy => policies.crew,
            impostor_policy => policies.impostor,
            timeout_ms => policies.timeout_ms,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, kind: &str, seed: u64) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let root = std::env::var_os(LOG_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            root.join(format!("{kind}-seed{seed}"))
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct LeagueArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    episodes_per_matchup: Option<usize>,
    /// Comma-separated policy list replacing the configured one.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory holding `*.jsonl` episode logs.
    dir: PathBuf,
    /// Config for detector and metric settings; defaults to the directory's
    /// own `config.toml`, then to built-in defaults.
    #[arg(long)]
    config: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    out: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn report_json(report: &AnalysisReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(n) = args.parallel {
        cfg.parallel = n;
    }
    cfg.validate()?;
    let out = args.common.out_dir("run", cfg.seed);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;

    let bindings = cfg.bindings();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallel).build()?;
    let results: Vec<Result<PathBuf>> = pool.install(|| {
        (0..cfg.episodes)
            .into_par_iter()
            .map(|i| {
                let log = run_generated(&cfg.episode_spec(i), &bindings)?;
                let path = out.join(format!("episode_{i:04}.jsonl"));
                fs::write(&path, log.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
                Ok(path)
            })
            .collect()
    });
    let paths = results.into_iter().collect::<Result<Vec<_>>>()?;

    // The report is computed from the files just written, exactly as
    // `analyze` would.
    let loaded = load_log_dir(&out)?;
    let logs: Vec<EpisodeLog> = loaded.logs.into_iter().map(|(_, l)| l).collect();
    let report = analyze_logs(&logs, cfg.task_weighting, &cfg.detectors);
    fs::write(out.join("report.json"), report_json(&report)?)?;
    let agg = &report.metrics.aggregate;
    println!("{} episodes written to {}", paths.len(), out.display());
    println!("crew wins: {} / impostor wins: {}", agg.crew_wins, agg.impostor_wins);
    Ok(())
}

#[derive(Serialize)]
struct PatternLeague {
    pattern: String,
    standings: Vec<Standing>,
    elo_error: Option<String>,
    policies: Vec<String>,
    overall: Vec<Vec<Option<f64>>>,
    impostor: Vec<Vec<Option<f64>>>,
    detection: Vec<Vec<Option<f64>>>,
    win_lean: Vec<Option<f64>>,
    win_lean_filled: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct MatchupSummary<'a> {
    pattern: &'a str,
    crew_policy: &'a str,
    impostor_policy: &'a str,
    episodes: usize,
    scored: usize,
    crew_wins: usize,
    failures: Vec<String>,
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn format_standings(pattern: &str, rows: &[Standing]) -> String {
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
    let mut s = format!("pattern {pattern}\n{:<4} {:<24} {:>8} {:>8} {:>8}\n", "rank", "policy", "elo", "crew", "imp");
    for r in rows {
        s += &format!(
            "{:<4} {:<24} {:>8.1} {:>8} {:>8}\n",
            r.rank,
            r.policy,
            r.elo,
            pct(r.crew_win_rate),
            pct(r.impostor_win_rate)
        );
    }
    s
}

fn cmd_league(args: LeagueArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(n) = args.episodes_per_matchup {
        cfg.league.episodes_per_matchup = n;
    }
    if let Some(p) = args.policies {
        cfg.league.policies = p;
    }
    if cfg.league.policies.is_empty() || cfg.league.patterns.is_empty() || cfg.league.episodes_per_matchup == 0 {
        bail!("league needs at least one policy, one pattern, and one episode per matchup");
    }
    let out = args.common.out_dir("league", cfg.seed);
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;

    let matchups = run_league(&cfg.league_spec())?;
    for m in &matchups {
        let dir = out.join("logs").join(file_safe(&m.pattern)).join(format!(
            "{}__{}",
            file_safe(&m.crew_policy),
            file_safe(&m.impostor_policy)
        ));
        fs::create_dir_all(&dir)?;
        for (i, r) in m.results.iter().enumerate() {
            if let Some(log) = &r.log {
                fs::write(dir.join(format!("episode_{i:04}.jsonl")), log.to_jsonl())?;
            }
        }
    }
    let summaries: Vec<MatchupSummary> = matchups
        .iter()
        .map(|m| MatchupSummary {
            pattern: &m.pattern,
            crew_policy: &m.crew_policy,
            impostor_policy: &m.impostor_policy,
            episodes: m.results.len(),
            scored: m.scored().count(),
            crew_wins: m.crew_wins(),
            failures: m.results.iter().filter_map(|r| r.error.clone()).collect(),
        })
        .collect();
    write_json(&out.join("matchups.json"), &summaries)?;

    let policies = &cfg.league.policies;
    let elo = elo_by_pattern(policies, &matchups, cfg.elo, cfg.seed);
    let mut text = String::new();
    let mut reports = Vec::new();
    for pattern in &cfg.league.patterns {
        let ms: Vec<Matchup> = matchups.iter().filter(|m| m.pattern == pattern.name).cloned().collect();
        let (rows, elo_error) = match elo.get(&pattern.name) {
            Some(Ok(table)) => (standings(table, &ms), None),
            Some(Err(e)) => (Vec::new(), Some(e.to_string())),
            None => (Vec::new(), Some("no matchups".to_string())),
        };
        text += &format_standings(&pattern.name, &rows);
        let logs: Vec<EpisodeLog> = ms
            .iter()
            .flat_map(|m| m.results.iter().filter(|r| r.outcome.is_some()).filter_map(|r| r.log.clone()))
            .collect();
        let wm = win_matrices(policies, &ms);
        reports.push(PatternLeague {
            pattern: pattern.name.clone(),
            standings: rows,
            elo_error,
            policies: wm.policies,
            overall: wm.overall,
            impostor: wm.impostor,
            detection: detection_matrix(policies, &ms),
            win_lean: mean_trajectory(&logs, &cfg.win_lean, false),
            win_lean_filled: mean_trajectory(&logs, &cfg.win_lean, true),
        });
    }
    write_json(&out.join("league.json"), &reports)?;
    fs::write(out.join("standings.txt"), &text)?;
    print!("{text}");
    println!("league artifacts written to {}", out.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(c) => RunConfig::load(c)?,
        None => {
            let local = args.dir.join("config.toml");
            if local.is_file() {
                RunConfig::load(&local.to_string_lossy())?
            } else {
                RunConfig::default()
            }
        }
    };
    let loaded = load_log_dir(&args.dir)?;
    let skipped: BTreeMap<_, _> = loaded.skipped.iter().collect();
    for (path, n) in &skipped {
        eprintln!("warning: skipped {n} unparseable line(s) in {}", path.display());
    }
    if !skipped.is_empty() {
        eprintln!("warning: {} line(s) skipped across {} file(s)", skipped.values().copied().sum::<usize>(), skipped.len());
    }
    let logs: Vec<EpisodeLog> = loaded.logs.into_iter().map(|(_, l)| l).collect();
    let report = report_json(&analyze_logs(&logs, cfg.task_weighting, &cfg.detectors))?;
    match args.out {
        Some(p) => fs::write(&p, report).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_replay_export(args: ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let parsed = EpisodeLog::parse(&text);
    if parsed.skipped > 0 {
        eprintln!("warning: skipped {} unparseable line(s)", parsed.skipped);
    }
    let replay = export_replay(&parsed.log).with_context(|| format!("exporting {}", args.log.display()))?;
    write_json(&args.out, &replay)?;
    println!("{} frames written to {}", replay.frames.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::League(a) => cmd_league(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::ReplayExport(a) => cmd_replay_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
