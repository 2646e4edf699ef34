//! Episode execution: the per-node stop phase, the choice phase, strategy
//! hooks and transitions, up to the step cap.
//!
//! [`EpisodeState`] is the serializable state machine shared by the
//! automated engine ([`run_episode`]) and the interactive session service.

mod parse;
mod perspective;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use parse::{parse_decision, DEFAULT_CONFIDENCE};
pub use perspective::{index_letter, initial_heading, letter_index, perspectives, Direction, Perspective};

use crate::bench::Task;
use crate::error::{EpisodeError, PolicyError};
use crate::graph::{bfs_to, NavGraph, NodeIdx};
use crate::policy::Policy;
use crate::seed::mix_seed;
use crate::strategy::{MemoryStore, Runtime, StrategyStack};
use crate::synth::{describe_view, ObservationTable, ObservationText};

pub const DEFAULT_MAX_STEPS: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Stop,
    Choice,
}

/// One policy output. Stop phase: action 0 continues, -1 stops. Choice
/// phase: index into the offered perspectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub phase: Phase,
    pub observation: String,
    pub rationale: String,
    pub action: i64,
    pub confidence: f64,
    pub fallback_used: bool,
}

impl Decision {
    pub fn fallback(phase: Phase) -> Self {
        Self {
            phase,
            observation: String::new(),
            rationale: String::new(),
            action: 0,
            confidence: 0.0,
            fallback_used: true,
        }
    }

    pub fn new(phase: Phase, action: i64, confidence: f64, rationale: impl Into<String>) -> Self {
        Self {
            phase,
            observation: String::new(),
            rationale: rationale.into(),
            action,
            confidence,
            fallback_used: false,
        }
    }

    pub fn is_stop(&self) -> bool {
        self.phase == Phase::Stop && self.action == -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktrackRecord {
    pub mechanism: String,
    /// Retraced nodes after the move, ending at the revert target.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub node: String,
    pub heading: f64,
    /// Hop distance to the goal, `None` when unreachable.
    pub distance_to_goal: Option<u32>,
    pub stop: Decision,
    #[serde(default)]
    pub choice: Option<Decision>,
    #[serde(default)]
    pub next: Option<String>,
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub backtrack: Option<BacktrackRecord>,
    #[serde(default)]
    pub wall_ms: f64,
}

impl StepRecord {
    /// Moves consumed by this record, retraced hops included.
    pub fn moves(&self) -> usize {
        usize::from(self.next.is_some()) + self.backtrack.as_ref().map_or(0, |b| b.path.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stopped,
    StepCap,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Done(Termination),
}

fn default_thresholds() -> Vec<f64> {
    vec![40.0, 50.0, 60.0]
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

fn default_one() -> u32 {
    1
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_thresholds")]
    pub tcp_thresholds: Vec<f64>,
    #[serde(default = "default_one")]
    pub round: u32,
    #[serde(default = "default_one")]
    pub total_rounds: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            tcp_thresholds: default_thresholds(),
            round: 1,
            total_rounds: 1,
            seed: 0,
            retries: default_retries(),
            retry_backoff_ms: default_backoff(),
        }
    }
}

impl EpisodeConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Memory retrieval runs only in the last of several rounds.
    pub fn retrieval_enabled(&self) -> bool {
        self.total_rounds > 1 && self.round == self.total_rounds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: String,
    pub round: u32,
    pub start: String,
    pub steps: Vec<StepRecord>,
    pub terminal: String,
    pub termination: Termination,
    pub moves: usize,
    #[serde(default)]
    pub error: Option<String>,
    pub config: EpisodeConfig,
}

impl Trajectory {
    /// Every node occupied, in order: the start, each move target and each
    /// retraced node.
    pub fn positions(&self) -> Vec<&str> {
        let mut out = vec![self.start.as_str()];
        for s in &self.steps {
            if let Some(n) = &s.next {
                out.push(n);
            }
            if let Some(b) = &s.backtrack {
                out.extend(b.path.iter().map(String::as_str));
            }
        }
        out
    }
}

/// Graph plus the observation source used to describe views.
pub struct Env<'a> {
    pub graph: &'a NavGraph,
    table: Option<HashMap<&'a str, Vec<&'a ObservationText>>>,
}

impl<'a> Env<'a> {
    pub fn new(graph: &'a NavGraph) -> Self {
        Self { graph, table: None }
    }

    pub fn with_observations(graph: &'a NavGraph, table: &'a ObservationTable) -> Self {
        let mut map: HashMap<&str, Vec<&ObservationText>> = HashMap::new();
        for o in &table.observations {
            map.entry(o.node.as_str()).or_default().push(o);
        }
        Self {
            graph,
            table: Some(map),
        }
    }

    /// View from `v` along `heading`: the table entry when present,
    /// otherwise a generated description.
    pub fn observe(&self, v: NodeIdx, heading: f64) -> ObservationText {
        let id = self.graph.id(v);
        if let Some(o) = self.table.as_ref().and_then(|t| t.get(id)).and_then(|list| {
            list.iter()
                .find(|o| crate::geo::angular_separation(o.heading, heading) <= crate::graph::HEADING_TOLERANCE_DEG)
        }) {
            return (*o).clone();
        }
        describe_view(self.graph, v, heading).unwrap_or_else(|_| ObservationText {
            node: id.to_string(),
            heading,
            text: String::new(),
            tags: Vec::new(),
            image: None,
        })
    }
}

/// Strategy-provided prompt material and structured hints for a decision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    pub backtracked: bool,
    pub hint: Option<usize>,
    /// Cognition and retrieval text for the historical-context slot.
    pub surrounding: String,
    /// Recent-step text for the trajectory slot.
    pub history: String,
    /// Nodes of the recent-step window.
    pub recent_nodes: Vec<NodeIdx>,
    /// Neighbors whose stored edge outcomes are all failures.
    pub avoid: Vec<NodeIdx>,
}

/// Everything a policy may look at when deciding.
pub struct DecisionView<'a> {
    pub graph: &'a NavGraph,
    pub task: &'a Task,
    pub node: NodeIdx,
    pub heading: f64,
    pub step: usize,
    pub phase: Phase,
    pub perspectives: &'a [Perspective],
    /// One observation per perspective, same order.
    pub observations: &'a [ObservationText],
    pub context: &'a PromptContext,
    pub seed: u64,
}

/// Serializable episode progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub task: String,
    pub round: u32,
    pub start: String,
    pub node: String,
    pub heading: f64,
    pub moves: usize,
    pub max_steps: usize,
    pub steps: Vec<StepRecord>,
    /// Positions since the start with retraced segments removed.
    pub path: Vec<String>,
    /// Confidence of the move that arrived at `path[i]` (1.0 for the start).
    pub path_confidence: Vec<f64>,
    pub status: Status,
    #[serde(default)]
    pub error: Option<String>,
}

impl EpisodeState {
    pub fn new(g: &NavGraph, task: &Task, cfg: &EpisodeConfig) -> Result<Self, EpisodeError> {
        let invalid = |reason: String| EpisodeError::InvalidTask {
            task: task.id.clone(),
            reason,
        };
        if cfg.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1".into()));
        }
        let start = g.require(&task.start)?;
        let goal = g.require(&task.goal)?;
        if bfs_to(g, goal)[start.index()].is_none() {
            return Err(invalid(format!("goal `{}` unreachable from start `{}`", task.goal, task.start)));
        }
        Ok(Self {
            task: task.id.clone(),
            round: cfg.round,
            start: task.start.clone(),
            node: task.start.clone(),
            heading: initial_heading(g, start),
            moves: 0,
            max_steps: cfg.max_steps,
            steps: Vec::new(),
            path: vec![task.start.clone()],
            path_confidence: vec![1.0],
            status: Status::Active,
            error: None,
        })
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub fn node_idx(&self, g: &NavGraph) -> NodeIdx {
        g.idx(&self.node).expect("episode node belongs to the graph")
    }

    pub fn perspectives(&self, g: &NavGraph) -> Vec<Perspective> {
        perspectives(g, self.node_idx(g), self.heading)
    }

    pub fn remaining(&self) -> usize {
        self.max_steps.saturating_sub(self.moves)
    }

    fn base_record(&self, distance_to_goal: Option<u32>, stop: Decision, wall_ms: f64) -> StepRecord {
        StepRecord {
            index: self.steps.len(),
            node: self.node.clone(),
            heading: self.heading,
            distance_to_goal,
            stop,
            choice: None,
            next: None,
            direction: None,
            backtrack: None,
            wall_ms,
        }
    }

    /// Record a stop decision and terminate.
    pub fn apply_stop(&mut self, distance_to_goal: Option<u32>, stop: Decision, wall_ms: f64) {
        debug_assert!(self.is_active());
        let rec = self.base_record(distance_to_goal, stop, wall_ms);
        self.steps.push(rec);
        self.status = Status::Done(Termination::Stopped);
    }

    /// Record a move along perspective `choice.action` and advance.
    pub fn apply_move(
        &mut self,
        g: &NavGraph,
        distance_to_goal: Option<u32>,
        stop: Decision,
        choice: Decision,
        wall_ms: f64,
    ) -> Result<(), EpisodeError> {
        let persp = self.perspectives(g);
        let p = usize::try_from(choice.action)
            .ok()
            .and_then(|i| persp.get(i))
            .ok_or_else(|| EpisodeError::InvalidTask {
                task: self.task.clone(),
                reason: format!("action {} outside 0..{}", choice.action, persp.len()),
            })?;
        let mut rec = self.base_record(distance_to_goal, stop, wall_ms);
        let next = g.id(p.to).to_string();
        rec.next = Some(next.clone());
        rec.direction = Some(p.direction);
        self.path.push(next.clone());
        self.path_confidence.push(choice.confidence);
        rec.choice = Some(choice);
        self.steps.push(rec);
        self.node = next;
        self.heading = p.heading;
        self.moves += 1;
        if self.moves >= self.max_steps {
            self.status = Status::Done(Termination::StepCap);
        }
        Ok(())
    }

    /// Retrace the effective path back to `path[target]`, as far as the
    /// step budget allows, and attach the hops to the last record.
    pub fn apply_backtrack(&mut self, g: &NavGraph, target: usize, mechanism: &str) {
        let last = self.path.len() - 1;
        if target >= last || self.steps.is_empty() {
            if let Some(rec) = self.steps.last_mut() {
                rec.backtrack = Some(BacktrackRecord {
                    mechanism: mechanism.into(),
                    path: Vec::new(),
                });
            }
            return;
        }
        let hops = (last - target).min(self.remaining());
        let retraced: Vec<String> = (0..hops).map(|i| self.path[last - 1 - i].clone()).collect();
        for pair in std::iter::once(&self.node).chain(&retraced).collect::<Vec<_>>().windows(2) {
            let (a, b) = (g.idx(pair[0]), g.idx(pair[1]));
            if let (Some(a), Some(b)) = (a, b) {
                if let Some(e) = g.edge_between(a, b) {
                    self.heading = e.azimuth;
                }
            }
        }
        self.path.truncate(last + 1 - hops);
        self.path_confidence.truncate(last + 1 - hops);
        if let Some(n) = retraced.last() {
            self.node = n.clone();
        }
        self.moves += hops;
        self.steps.last_mut().expect("backtrack follows a move").backtrack = Some(BacktrackRecord {
            mechanism: mechanism.into(),
            path: retraced,
        });
        if self.moves >= self.max_steps {
            self.status = Status::Done(Termination::StepCap);
        }
    }

    pub fn fail(&mut self, message: String) {
        self.status = Status::Done(Termination::Error);
        self.error = Some(message);
    }

    pub fn into_trajectory(self, cfg: &EpisodeConfig) -> Trajectory {
        let termination = match self.status {
            Status::Done(t) => t,
            // an interrupted episode is reported as an error
            Status::Active => Termination::Error,
        };
        Trajectory {
            task: self.task,
            round: self.round,
            start: self.start,
            steps: self.steps,
            terminal: self.node,
            termination,
            moves: self.moves,
            error: self.error,
            config: cfg.clone(),
        }
    }
}

fn call_policy(policy: &dyn Policy, view: &DecisionView<'_>, cfg: &EpisodeConfig) -> Result<Decision, PolicyError> {
    let mut attempt = 0;
    loop {
        match policy.decide(view) {
            Ok(d) => return Ok(d),
            Err(e) if attempt >= cfg.retries => return Err(e),
            Err(e) => {
                tracing::warn!(error = %e, attempt, "policy call failed, retrying");
                std::thread::sleep(Duration::from_millis(cfg.retry_backoff_ms.saturating_mul(1 << attempt.min(16))));
                attempt += 1;
            }
        }
    }
}

/// Seed for the decision at `moves` in `phase`.
pub fn decision_seed(episode_seed: u64, moves: usize, phase: Phase) -> u64 {
    mix_seed(mix_seed(episode_seed, moves as u64), phase as u64)
}

/// Run one episode. Policy transport failures that survive the retries end
/// the episode with [`Termination::Error`] and a partial trajectory.
pub fn run_episode(
    env: &Env<'_>,
    task: &Task,
    policy: &dyn Policy,
    stack: &StrategyStack,
    store: &mut MemoryStore,
    cfg: &EpisodeConfig,
) -> Result<Trajectory, EpisodeError> {
    let g = env.graph;
    stack.validate().map_err(EpisodeError::Strategy)?;
    let mut st = EpisodeState::new(g, task, cfg)?;
    let goal = g.require(&task.goal)?;
    let dist = bfs_to(g, goal);
    let mut rt = Runtime::new(stack, cfg);
    rt.begin(&dist, &st, g);

    while st.is_active() {
        let t0 = Instant::now();
        let v = st.node_idx(g);
        let persp = st.perspectives(g);
        let obs: Vec<ObservationText> = persp.iter().map(|p| env.observe(v, p.heading)).collect();
        let d_t = dist[v.index()];

        let ctx = rt.context(g, store, &st, Phase::Stop);
        let view = DecisionView {
            graph: g,
            task,
            node: v,
            heading: st.heading,
            step: st.moves,
            phase: Phase::Stop,
            perspectives: &persp,
            observations: &obs,
            context: &ctx,
            seed: decision_seed(cfg.seed, st.moves, Phase::Stop),
        };
        let stop = match call_policy(policy, &view, cfg) {
            Ok(d) => d,
            Err(e) => {
                st.fail(e.to_string());
                break;
            }
        };
        if stop.is_stop() {
            st.apply_stop(d_t, stop, ms(t0));
            break;
        }

        let ctx = rt.context(g, store, &st, Phase::Choice);
        let view = DecisionView {
            phase: Phase::Choice,
            context: &ctx,
            seed: decision_seed(cfg.seed, st.moves, Phase::Choice),
            ..view
        };
        let mut choice = match call_policy(policy, &view, cfg) {
            Ok(d) => d,
            Err(e) => {
                st.fail(e.to_string());
                break;
            }
        };
        if usize::try_from(choice.action).map_or(true, |a| a >= persp.len()) {
            choice = Decision::fallback(Phase::Choice);
        }
        rt.after_choice(g, store, &st, &choice, &persp);
        let conf = choice.confidence;
        st.apply_move(g, d_t, stop, choice, ms(t0))?;
        if !st.is_active() {
            break;
        }
        if let Some(plan) = rt.after_move(&dist, &st, conf, g) {
            st.apply_backtrack(g, plan.target, plan.mechanism);
            if st.is_active() {
                rt.after_backtrack(g, &dist, &st);
            }
        }
    }
    store.end_episode();
    Ok(st.into_trajectory(cfg))
}

fn ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}
