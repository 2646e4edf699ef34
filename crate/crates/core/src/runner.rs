//! Batch runs over task suites, their on-disk artifacts, and replay.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json        run id, input hash, counts, failures, wall time
//! metrics.json         per-episode metrics and grouped means
//! metrics.csv          category means plus the overall row
//! episodes.csv         one row per evaluated episode
//! logs/{task}.jsonl    header, step and footer lines for every round
//! memory/{task}.json   memory store, when the stack uses one
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{Task, TaskFile};
use crate::episode::{EpisodeConfig, Env, StepRecord, Termination, Trajectory, DEFAULT_MAX_STEPS};
use crate::error::RunError;
use crate::graph::{load_graph, NavGraph};
use crate::metrics::{aggregate, evaluate, to_csv, EpisodeMetrics, GroupBy, MetricRow};
use crate::policy::{Policy, PolicyConfig};
use crate::seed::mix_seed;
use crate::strategy::{run_rounds, MemoryStore, StrategyStack, DEFAULT_ROUNDS};
use crate::synth::ObservationTable;

fn one() -> usize {
    1
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub graph: PathBuf,
    pub tasks: PathBuf,
    #[serde(default)]
    pub observations: Option<PathBuf>,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub strategies: StrategyStack,
    /// Rounds per task; defaults to 3 when a mechanism reads earlier
    /// rounds and to 1 otherwise.
    #[serde(default)]
    pub rounds: Option<u32>,
    #[serde(default = "one")]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl RunSpec {
    /// Read a spec file; relative paths inside it resolve against the
    /// file's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
        let mut spec: RunSpec = serde_json::from_slice(&bytes).map_err(|e| RunError::json(path, e))?;
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            fix(&mut spec.graph);
            fix(&mut spec.tasks);
            fix(&mut spec.output_dir);
            if let Some(o) = &mut spec.observations {
                fix(o);
            }
        }
        Ok(spec)
    }

    pub fn effective_rounds(&self) -> u32 {
        self.rounds
            .unwrap_or(if self.strategies.uses_rounds() { DEFAULT_ROUNDS } else { 1 })
            .max(1)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::InvalidSpec(m));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.rounds == Some(0) {
            return bad("rounds must be at least 1".into());
        }
        for p in [Some(&self.graph), Some(&self.tasks), self.observations.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        self.policy.validate().map_err(|e| RunError::InvalidSpec(e.to_string()))?;
        self.strategies.validate().map_err(RunError::InvalidSpec)?;
        Ok(())
    }

    /// SHA-256 over everything that determines the results: input file
    /// contents, policy, strategies, rounds, seed and step cap.
    pub fn config_hash(&self) -> Result<String, RunError> {
        let mut h = Sha256::new();
        for p in [Some(&self.graph), Some(&self.tasks), self.observations.as_ref()] {
            match p {
                Some(p) => h.update(Sha256::digest(fs::read(p).map_err(|e| RunError::io(p, e))?)),
                None => h.update([0u8; 32]),
            }
        }
        let knobs = serde_json::json!({
            "policy": self.policy,
            "strategies": self.strategies,
            "rounds": self.effective_rounds(),
            "seed": self.seed,
            "max_steps": self.max_steps,
        });
        h.update(knobs.to_string().as_bytes());
        Ok(hex(&h.finalize()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub task: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config_hash: String,
    pub version: String,
    pub policy: String,
    pub strategies: String,
    pub rounds: u32,
    pub seed: u64,
    pub episodes: usize,
    pub failures: Vec<Failure>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub episodes: Vec<EpisodeMetrics>,
    pub overall: Vec<MetricRow>,
    pub category: Vec<MetricRow>,
    pub city: Vec<MetricRow>,
}

impl MetricsFile {
    pub fn from_episodes(episodes: Vec<EpisodeMetrics>) -> Self {
        Self {
            overall: aggregate(&episodes, GroupBy::Overall),
            category: aggregate(&episodes, GroupBy::Category),
            city: aggregate(&episodes, GroupBy::City),
            episodes,
        }
    }

    pub fn rows(&self, by: GroupBy) -> &[MetricRow] {
        match by {
            GroupBy::Overall => &self.overall,
            GroupBy::Category => &self.category,
            GroupBy::City => &self.city,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricsFile,
    /// Trajectories of every round, in task order.
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub task: String,
    pub round: u32,
    pub start: String,
    pub policy: String,
    pub strategies: String,
    pub config: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub terminal: String,
    pub termination: Termination,
    pub moves: usize,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogLine {
    Header(LogHeader),
    Step(StepRecord),
    Footer(LogFooter),
}

/// JSON-lines form of one or more rounds.
pub fn log_lines(trajs: &[Trajectory], policy: &str, strategies: &str) -> String {
    let mut out = String::new();
    let mut push = |l: LogLine| {
        out.push_str(&serde_json::to_string(&l).expect("log line serializes"));
        out.push('\n');
    };
    for t in trajs {
        push(LogLine::Header(LogHeader {
            task: t.task.clone(),
            round: t.round,
            start: t.start.clone(),
            policy: policy.into(),
            strategies: strategies.into(),
            config: t.config.clone(),
        }));
        for s in &t.steps {
            push(LogLine::Step(s.clone()));
        }
        push(LogLine::Footer(LogFooter {
            terminal: t.terminal.clone(),
            termination: t.termination,
            moves: t.moves,
            error: t.error.clone(),
        }));
    }
    out
}

/// Parse a trajectory log. Errors name the offending 1-based line.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, RunError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| RunError::io(path, e))?;
    parse_log(BufReader::new(file))
}

pub fn parse_log(reader: impl BufRead) -> Result<Vec<Trajectory>, RunError> {
    let mut out = Vec::new();
    let mut open: Option<(LogHeader, Vec<StepRecord>)> = None;
    let mut last = 0;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        last = n;
        let line = line.map_err(|e| RunError::LogParse {
            line: n,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| RunError::LogParse {
            line: n,
            message: e.to_string(),
        })?;
        let err = |m: &str| RunError::LogParse {
            line: n,
            message: m.into(),
        };
        match parsed {
            LogLine::Header(h) => {
                if open.is_some() {
                    return Err(err("header before the previous round's footer"));
                }
                open = Some((h, Vec::new()));
            }
            LogLine::Step(s) => open.as_mut().ok_or_else(|| err("step outside a round"))?.1.push(s),
            LogLine::Footer(f) => {
                let (h, steps) = open.take().ok_or_else(|| err("footer without header"))?;
                out.push(Trajectory {
                    task: h.task,
                    round: h.round,
                    start: h.start,
                    steps,
                    terminal: f.terminal,
                    termination: f.termination,
                    moves: f.moves,
                    error: f.error,
                    config: h.config,
                });
            }
        }
    }
    if open.is_some() {
        return Err(RunError::LogParse {
            line: last + 1,
            message: "log ends before the round's footer".into(),
        });
    }
    if out.is_empty() {
        return Err(RunError::LogParse {
            line: last + 1,
            message: "log holds no rounds".into(),
        });
    }
    Ok(out)
}

/// Check that a trajectory is physically possible on `g`: every move and
/// every retraced hop follows an edge, retraced nodes were visited before,
/// and the counters agree.
pub fn check_structure(g: &NavGraph, t: &Trajectory) -> Result<(), RunError> {
    let serr = |step: usize, message: String| RunError::Structural { step, message };
    let exists = |step: usize, id: &str| g.idx(id).ok_or_else(|| serr(step, format!("unknown node `{id}`")));
    let mut cur = exists(0, &t.start)?;
    let mut visited = vec![cur];
    let mut moves = 0;
    for (i, s) in t.steps.iter().enumerate() {
        if s.node != g.id(cur) {
            return Err(serr(i, format!("step at `{}` but agent is at `{}`", s.node, g.id(cur))));
        }
        if let Some(n) = &s.next {
            let nx = exists(i, n)?;
            if g.edge_between(cur, nx).is_none() {
                return Err(serr(i, format!("`{}` -> `{n}` is not an edge and is not flagged as a backtrack", g.id(cur))));
            }
            cur = nx;
            visited.push(cur);
            moves += 1;
        }
        if let Some(b) = &s.backtrack {
            for n in &b.path {
                let nx = exists(i, n)?;
                if !visited.contains(&nx) {
                    return Err(serr(i, format!("backtrack enters unvisited node `{n}`")));
                }
                if g.edge_between(cur, nx).is_none() {
                    return Err(serr(i, format!("backtrack hop `{}` -> `{n}` is not an edge", g.id(cur))));
                }
                cur = nx;
                moves += 1;
            }
        }
    }
    if moves != t.moves {
        return Err(serr(t.steps.len(), format!("footer counts {} moves, steps sum to {moves}", t.moves)));
    }
    if moves > t.config.max_steps {
        return Err(serr(t.steps.len(), format!("{moves} moves exceed the cap of {}", t.config.max_steps)));
    }
    if g.id(cur) != t.terminal {
        return Err(serr(t.steps.len(), format!("footer terminal `{}` but agent ends at `{}`", t.terminal, g.id(cur))));
    }
    Ok(())
}

/// Recompute the metrics of every round in a log.
pub fn replay(g: &NavGraph, task: &Task, log: impl AsRef<Path>) -> Result<Vec<EpisodeMetrics>, RunError> {
    let trajs = read_log(log)?;
    trajs
        .iter()
        .map(|t| {
            if t.task != task.id {
                return Err(RunError::InvalidSpec(format!("log is for task `{}`, not `{}`", t.task, task.id)));
            }
            check_structure(g, t)?;
            Ok(evaluate(g, t, task)?)
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| RunError::io(d, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| RunError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| RunError::io(path, e))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), RunError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| RunError::json(path, e))?;
    s.push('\n');
    write(path, &s)
}

/// File-name-safe form of a task id.
pub fn log_name(task: &str) -> String {
    task.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub const EPISODES_HEADER: &str = "task,category,city,round,termination,TCE,TCP-40m,TCP-50m,TCP-60m,TCC,SPL,SPD,nDTW,AS";

pub fn episodes_csv(ms: &[EpisodeMetrics]) -> String {
    let mut out = String::from(EPISODES_HEADER);
    out.push('\n');
    let b = |x: bool| u8::from(x);
    for m in ms {
        let term = serde_json::to_value(m.termination).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{term},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
            m.task,
            m.category.name(),
            m.city,
            m.round,
            b(m.tce),
            b(m.tcp_at(40.0)),
            b(m.tcp_at(50.0)),
            b(m.tcp_at(60.0)),
            b(m.tcc),
            m.spl,
            m.spd,
            m.ndtw,
            m.steps
        );
    }
    out
}

struct TaskOutcome {
    trajectories: Vec<Trajectory>,
    store: Option<MemoryStore>,
    metrics: Option<EpisodeMetrics>,
    failure: Option<Failure>,
}

fn run_task(
    env: &Env<'_>,
    task: &Task,
    index: usize,
    policy: &dyn Policy,
    spec: &RunSpec,
) -> TaskOutcome {
    let failed = |error: String| TaskOutcome {
        trajectories: Vec::new(),
        store: None,
        metrics: None,
        failure: Some(Failure {
            task: task.id.clone(),
            error,
        }),
    };
    let cfg = EpisodeConfig {
        max_steps: spec.max_steps,
        seed: mix_seed(spec.seed, index as u64),
        ..EpisodeConfig::default()
    };
    let (trajs, store) = match run_rounds(env, task, policy, &spec.strategies, spec.effective_rounds(), &cfg) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let last = trajs.last().expect("at least one round");
    let metrics = match evaluate(env.graph, last, task) {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    let failure = last.error.as_ref().map(|e| Failure {
        task: task.id.clone(),
        error: e.clone(),
    });
    TaskOutcome {
        store: Some(store),
        metrics: Some(metrics),
        failure,
        trajectories: trajs,
    }
}

/// Execute a run and write its artifacts.
pub fn run_suite(spec: &RunSpec) -> Result<RunArtifact, RunError> {
    let t0 = Instant::now();
    spec.validate()?;
    let g = load_graph(&spec.graph)?;
    let tasks = TaskFile::read(&spec.tasks)?.tasks;
    let table = spec.observations.as_ref().map(ObservationTable::read).transpose()?;
    let env = match &table {
        Some(t) => Env::with_observations(&g, t),
        None => Env::new(&g),
    };
    let policy = spec.policy.build().map_err(|e| RunError::InvalidSpec(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| RunError::InvalidSpec(e.to_string()))?;
    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| run_task(&env, t, i, policy.as_ref(), spec))
            .collect()
    });

    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let strategies = spec.strategies.to_string();
    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    let mut trajectories = Vec::new();
    let mut seen = HashMap::new();
    for o in outcomes {
        if let Some(f) = o.failure {
            failures.push(f);
        }
        if let Some(first) = o.trajectories.first() {
            let name = log_name(&first.task);
            let dup = seen.entry(name.clone()).or_insert(0usize);
            *dup += 1;
            if *dup > 1 {
                return Err(RunError::InvalidSpec(format!("duplicate task id `{}`", first.task)));
            }
            write(&dir.join("logs").join(format!("{name}.jsonl")), &log_lines(&o.trajectories, policy.name(), &strategies))?;
            if let Some(store) = o.store.filter(|_| !spec.strategies.is_empty()) {
                write(&dir.join("memory").join(format!("{name}.json")), &store.to_json())?;
            }
        }
        episodes.extend(o.metrics);
        trajectories.extend(o.trajectories);
    }
    let metrics = MetricsFile::from_episodes(episodes);
    write_json(&dir.join("metrics.json"), &metrics)?;
    write(&dir.join("metrics.csv"), &to_csv(&metrics.category))?;
    write(&dir.join("episodes.csv"), &episodes_csv(&metrics.episodes))?;
    let config_hash = spec.config_hash()?;
    let manifest = Manifest {
        run_id: config_hash[..12].to_string(),
        config_hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        policy: policy.name().to_string(),
        strategies,
        rounds: spec.effective_rounds(),
        seed: spec.seed,
        episodes: tasks.len(),
        failures,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(RunArtifact {
        dir: dir.clone(),
        manifest,
        metrics,
        trajectories,
    })
}

pub fn read_metrics(dir: impl AsRef<Path>) -> Result<MetricsFile, RunError> {
    let path = dir.as_ref().join("metrics.json");
    let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::json(&path, e))
}

/// Write `report_{group}.csv` and `report_{group}.json` into `dir`.
pub fn report(dir: impl AsRef<Path>, by: GroupBy) -> Result<Vec<PathBuf>, RunError> {
    let dir = dir.as_ref();
    let m = read_metrics(dir)?;
    let name = match by {
        GroupBy::Overall => "overall",
        GroupBy::Category => "category",
        GroupBy::City => "city",
    };
    let csv = dir.join(format!("report_{name}.csv"));
    let json = dir.join(format!("report_{name}.json"));
    write(&csv, &to_csv(m.rows(by)))?;
    write_json(&json, &m.rows(by))?;
    Ok(vec![csv, json])
}

/// Write `plot_steps_ndtw.csv` (one row per episode) and `plot_tcp.csv`
/// (TCP per category and overall) into `dir`.
pub fn emit_plot_data(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, RunError> {
    let dir = dir.as_ref();
    let m = read_metrics(dir)?;
    let mut scatter = String::from("task,steps,nDTW\n");
    for e in &m.episodes {
        let _ = writeln!(scatter, "{},{},{:.6}", e.task, e.steps, e.ndtw);
    }
    let mut tcp = String::from("group,TCP-40m,TCP-50m,TCP-60m\n");
    for r in &m.category {
        let _ = writeln!(tcp, "{},{:.1},{:.1},{:.1}", r.group, r.tcp40 * 100.0, r.tcp50 * 100.0, r.tcp60 * 100.0);
    }
    let a = dir.join("plot_steps_ndtw.csv");
    let b = dir.join("plot_tcp.csv");
    write(&a, &scatter)?;
    write(&b, &tcp)?;
    Ok(vec![a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_log_names_line() {
        let text = "{\"type\":\"header\",\"task\":\"t\",\"round\":1,\"start\":\"a\",\"policy\":\"p\",\"strategies\":\"none\",\"config\":{}}\n{\"type\":\"step\",";
        match parse_log(text.as_bytes()) {
            Err(RunError::LogParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = "{\"type\":\"header\",\"task\":\"t\",\"round\":1,\"start\":\"a\",\"policy\":\"p\",\"strategies\":\"none\",\"config\":{}}\n";
        match parse_log(text.as_bytes()) {
            Err(RunError::LogParse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("footer"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_names_are_safe() {
        assert_eq!(log_name("t0001"), "t0001");
        assert_eq!(log_name("../x y"), ".._x_y");
    }
}
