//! Backtracking, cognition and retrieval mechanisms layered around a base
//! policy, plus the multi-round protocol.

mod backtrack;
mod memory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use backtrack::{
    b1_should_backtrack, b2_should_backtrack, b3_hint, confidence_target, distance_target, ConfidenceWindow,
    DistanceWindow, DEFAULT_THETA, DEFAULT_WINDOW,
};
pub use memory::{
    direction_bucket, distance_band, effective_path, r1_nodes, r2_nodes, r3_window, render_c1, render_c2,
    render_snapshot, EdgeMemory, EdgeOutcome, HistoryEntry, MemoryStore, MoveMemory, NodeMemory, NodeVisitRecord,
    RoundMemory,
};

use crate::bench::Task;
use crate::episode::{run_episode, Decision, Env, EpisodeConfig, EpisodeState, Perspective, Phase, PromptContext, Trajectory};
use crate::error::EpisodeError;
use crate::graph::NavGraph;
use crate::policy::Policy;
use crate::seed::mix_seed;

pub const DEFAULT_ROUNDS: u32 = 3;
pub const DEFAULT_HOPS: usize = 1;
pub const DEFAULT_RADIUS_M: f64 = 50.0;
pub const DEFAULT_HISTORY: usize = 3;

fn k_default() -> usize {
    DEFAULT_WINDOW
}
fn theta_default() -> f64 {
    DEFAULT_THETA
}
fn h_default() -> usize {
    DEFAULT_HOPS
}
fn radius_default() -> f64 {
    DEFAULT_RADIUS_M
}
fn n_default() -> usize {
    DEFAULT_HISTORY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Mechanism {
    /// Low mean confidence over the last `k` moves.
    B1 {
        #[serde(default = "k_default")]
        k: usize,
        #[serde(default = "theta_default")]
        theta: f64,
    },
    /// Goal distance rising over `k` consecutive moves.
    B2 {
        #[serde(default = "k_default")]
        k: usize,
    },
    /// B1 plus a corrective action hint after the revert.
    B3 {
        #[serde(default = "k_default")]
        k: usize,
        #[serde(default = "theta_default")]
        theta: f64,
    },
    /// Connectivity graph of prior rounds.
    C1,
    /// Relative positions along prior rounds.
    C2,
    /// Visited nodes within `h` hops.
    R1 {
        #[serde(default = "h_default")]
        h: usize,
    },
    /// Visited nodes within a radius.
    R2 {
        #[serde(default = "radius_default")]
        radius_m: f64,
    },
    /// The last `n` decisions of the running episode.
    R3 {
        #[serde(default = "n_default")]
        n: usize,
    },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::B1 { .. } => "B1",
            Mechanism::B2 { .. } => "B2",
            Mechanism::B3 { .. } => "B3",
            Mechanism::C1 => "C1",
            Mechanism::C2 => "C2",
            Mechanism::R1 { .. } => "R1",
            Mechanism::R2 { .. } => "R2",
            Mechanism::R3 { .. } => "R3",
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            Mechanism::B1 { k, theta } | Mechanism::B3 { k, theta } => {
                if k == 0 {
                    return Err(format!("{}: k must be at least 1", self.name()));
                }
                if !(0.0..=1.0).contains(&theta) {
                    return Err(format!("{}: theta {theta} outside [0, 1]", self.name()));
                }
            }
            Mechanism::B2 { k: 0 } => return Err("B2: k must be at least 1".into()),
            Mechanism::R2 { radius_m } if !(radius_m > 0.0 && radius_m.is_finite()) => {
                return Err("R2: radius must be positive".into())
            }
            Mechanism::R3 { n: 0 } => return Err("R3: n must be at least 1".into()),
            _ => {}
        }
        Ok(())
    }
}

impl FromStr for Mechanism {
    type Err = String;

    /// Mechanism name with default parameters, e.g. `B3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "B1" => Mechanism::B1 {
                k: DEFAULT_WINDOW,
                theta: DEFAULT_THETA,
            },
            "B2" => Mechanism::B2 { k: DEFAULT_WINDOW },
            "B3" => Mechanism::B3 {
                k: DEFAULT_WINDOW,
                theta: DEFAULT_THETA,
            },
            "C1" => Mechanism::C1,
            "C2" => Mechanism::C2,
            "R1" => Mechanism::R1 { h: DEFAULT_HOPS },
            "R2" => Mechanism::R2 {
                radius_m: DEFAULT_RADIUS_M,
            },
            "R3" => Mechanism::R3 { n: DEFAULT_HISTORY },
            other => return Err(format!("unknown mechanism `{other}`")),
        })
    }
}

/// Enabled mechanisms. B3 takes over B1's trigger when both are listed.
///
/// Deserializes from `"B3+R3"`, from a list of names, or from a list of
/// tagged objects with parameters, e.g. `[{"kind": "R3", "n": 4}]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StrategyStack {
    pub mechanisms: Vec<Mechanism>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StackRepr {
    Text(String),
    List(Vec<EntryRepr>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Name(String),
    Full(Mechanism),
}

impl<'de> Deserialize<'de> for StrategyStack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mechanisms = match StackRepr::deserialize(d)? {
            StackRepr::Text(s) => return s.parse().map_err(serde::de::Error::custom),
            StackRepr::List(items) => items
                .into_iter()
                .map(|e| match e {
                    EntryRepr::Name(n) => n.parse(),
                    EntryRepr::Full(m) => Ok(m),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(serde::de::Error::custom)?,
        };
        // duplicates are reported by validate
        Ok(Self { mechanisms })
    }
}

impl StrategyStack {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(mechanisms: Vec<Mechanism>) -> Result<Self, String> {
        let s = Self { mechanisms };
        s.validate()?;
        Ok(s)
    }

    pub fn is_empty(&self) -> bool {
        self.mechanisms.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = Vec::new();
        for m in &self.mechanisms {
            m.validate()?;
            if seen.contains(&m.name()) {
                return Err(format!("{} listed twice", m.name()));
            }
            seen.push(m.name());
        }
        if seen.contains(&"C1") && seen.contains(&"C2") {
            return Err("C1 and C2 share one prompt slot; enable at most one".into());
        }
        Ok(())
    }

    /// `(k, theta, with_hint)` of the confidence trigger, if any.
    pub fn confidence_trigger(&self) -> Option<(usize, f64, bool)> {
        let b3 = self.mechanisms.iter().find_map(|m| match *m {
            Mechanism::B3 { k, theta } => Some((k, theta, true)),
            _ => None,
        });
        b3.or_else(|| {
            self.mechanisms.iter().find_map(|m| match *m {
                Mechanism::B1 { k, theta } => Some((k, theta, false)),
                _ => None,
            })
        })
    }

    pub fn distance_trigger(&self) -> Option<usize> {
        self.mechanisms.iter().find_map(|m| match *m {
            Mechanism::B2 { k } => Some(k),
            _ => None,
        })
    }

    fn find<T>(&self, f: impl Fn(&Mechanism) -> Option<T>) -> Option<T> {
        self.mechanisms.iter().find_map(f)
    }

    /// Whether any mechanism reads the memory of earlier rounds.
    pub fn uses_rounds(&self) -> bool {
        self.mechanisms
            .iter()
            .any(|m| matches!(m, Mechanism::C1 | Mechanism::C2 | Mechanism::R1 { .. } | Mechanism::R2 { .. }))
    }
}

impl fmt::Display for StrategyStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mechanisms.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.mechanisms.iter().map(Mechanism::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for StrategyStack {
    type Err = String;

    /// Comma- or plus-separated mechanism names; empty or `none` for none.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Self::none());
        }
        let mechanisms = s
            .split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(mechanisms)
    }
}

/// A revert decided after a move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktrackPlan {
    /// Index into the effective path.
    pub target: usize,
    pub mechanism: &'static str,
}

/// Per-episode strategy state driven by the engine.
pub struct Runtime<'s> {
    stack: &'s StrategyStack,
    cognition: bool,
    retrieval: bool,
    conf: Option<ConfidenceWindow>,
    hint_enabled: bool,
    dist: Option<DistanceWindow>,
    pending_hint: Option<usize>,
    just_backtracked: bool,
    cognition_text: Option<String>,
}

impl<'s> Runtime<'s> {
    pub fn new(stack: &'s StrategyStack, cfg: &EpisodeConfig) -> Self {
        let trig = stack.confidence_trigger();
        Self {
            stack,
            cognition: cfg.round > 1,
            retrieval: cfg.retrieval_enabled(),
            conf: trig.map(|(k, theta, _)| ConfidenceWindow::new(k, theta)),
            hint_enabled: trig.is_some_and(|t| t.2),
            dist: stack.distance_trigger().map(DistanceWindow::new),
            pending_hint: None,
            just_backtracked: false,
            cognition_text: None,
        }
    }

    fn push_distance(&mut self, dist: &[Option<u32>], g: &NavGraph, st: &EpisodeState) {
        if let Some(w) = &mut self.dist {
            match dist[st.node_idx(g).index()] {
                Some(d) => w.push(d),
                None => w.clear(),
            }
        }
    }

    pub fn begin(&mut self, dist: &[Option<u32>], st: &EpisodeState, g: &NavGraph) {
        self.push_distance(dist, g, st);
    }

    pub fn context(&mut self, g: &NavGraph, store: &MemoryStore, st: &EpisodeState, phase: Phase) -> PromptContext {
        let mut ctx = PromptContext {
            backtracked: self.just_backtracked,
            hint: if phase == Phase::Choice { self.pending_hint } else { None },
            ..Default::default()
        };
        if phase == Phase::Stop {
            return ctx;
        }
        let v = st.node_idx(g);
        let mut parts = Vec::new();
        if self.cognition {
            let stack = self.stack;
            let text = self.cognition_text.get_or_insert_with(|| {
                if stack.find(|m| matches!(m, Mechanism::C1).then_some(())).is_some() {
                    render_c1(store)
                } else if stack.find(|m| matches!(m, Mechanism::C2).then_some(())).is_some() {
                    render_c2(store, g)
                } else {
                    String::new()
                }
            });
            if !text.is_empty() {
                parts.push(text.clone());
            }
        }
        if self.retrieval {
            let mut used = false;
            if let Some(h) = self.stack.find(|m| match *m {
                Mechanism::R1 { h } => Some(h),
                _ => None,
            }) {
                parts.push(render_snapshot(store, g, &r1_nodes(store, g, v, h)));
                used = true;
            }
            if let Some(r) = self.stack.find(|m| match *m {
                Mechanism::R2 { radius_m } => Some(radius_m),
                _ => None,
            }) {
                parts.push(render_snapshot(store, g, &r2_nodes(store, g, v, r)));
                used = true;
            }
            if used {
                ctx.avoid = store.failed_neighbors(g, v);
            }
        }
        ctx.surrounding = parts.join("\n\n");
        if let Some(n) = self.history_len() {
            ctx.history = r3_window(&store.history, n);
            let skip = store.history.len().saturating_sub(n);
            ctx.recent_nodes = store.history.iter().skip(skip).filter_map(|h| g.idx(&h.node)).collect();
        }
        ctx
    }

    fn history_len(&self) -> Option<usize> {
        self.stack.find(|m| match *m {
            Mechanism::R3 { n } => Some(n),
            _ => None,
        })
    }

    /// Called once the choice at the current node is final, before moving.
    pub fn after_choice(&mut self, g: &NavGraph, store: &mut MemoryStore, st: &EpisodeState, choice: &Decision, persp: &[Perspective]) {
        self.pending_hint = None;
        self.just_backtracked = false;
        let Some(n) = self.history_len() else {
            return;
        };
        let Some(p) = usize::try_from(choice.action).ok().and_then(|i| persp.get(i)) else {
            return;
        };
        let pos = g.node(st.node_idx(g)).pos;
        store.push_history(
            HistoryEntry {
                step: st.moves + 1,
                node: st.node.clone(),
                lat: pos.lat,
                lon: pos.lon,
                heading: p.heading,
                direction: p.direction,
                confidence: choice.confidence,
                rationale: choice.rationale.clone(),
            },
            n,
        );
    }

    /// Feed the trigger windows with the move just made. Cleared windows
    /// must refill before a trigger can fire again, which suppresses
    /// triggers for `k` moves after every revert.
    pub fn after_move(&mut self, dist: &[Option<u32>], st: &EpisodeState, confidence: f64, g: &NavGraph) -> Option<BacktrackPlan> {
        self.push_distance(dist, g, st);
        if let Some(w) = &mut self.conf {
            w.push(confidence);
            if b1_should_backtrack(w) {
                return Some(BacktrackPlan {
                    target: confidence_target(&st.path_confidence, w.k, w.theta),
                    mechanism: if self.hint_enabled { "B3" } else { "B1" },
                });
            }
        }
        if let Some(w) = &self.dist {
            if b2_should_backtrack(w) {
                return Some(BacktrackPlan {
                    target: distance_target(st.path.len(), w.k),
                    mechanism: "B2",
                });
            }
        }
        None
    }

    pub fn after_backtrack(&mut self, g: &NavGraph, dist: &[Option<u32>], st: &EpisodeState) {
        if let Some(w) = &mut self.conf {
            w.clear();
        }
        if let Some(w) = &mut self.dist {
            w.clear();
        }
        self.push_distance(dist, g, st);
        self.just_backtracked = true;
        if self.hint_enabled {
            self.pending_hint = b3_hint(g, st.node_idx(g), st.heading, dist);
        }
    }
}

/// Run `n_rounds` episodes of one task sharing a memory store. Retrieval is
/// active only in the final round, and only when there is more than one.
pub fn run_rounds(
    env: &Env<'_>,
    task: &Task,
    policy: &dyn Policy,
    stack: &StrategyStack,
    n_rounds: u32,
    base: &EpisodeConfig,
) -> Result<(Vec<Trajectory>, MemoryStore), EpisodeError> {
    let n_rounds = n_rounds.max(1);
    let mut store = MemoryStore::new(task.id.clone());
    let mut out = Vec::with_capacity(n_rounds as usize);
    for round in 1..=n_rounds {
        let cfg = EpisodeConfig {
            round,
            total_rounds: n_rounds,
            seed: if n_rounds == 1 { base.seed } else { mix_seed(base.seed, u64::from(round)) },
            ..base.clone()
        };
        let traj = run_episode(env, task, policy, stack, &mut store, &cfg)?;
        store.record_round(&traj);
        out.push(traj);
    }
    Ok((out, store))
}
