//! Per-task memory shared by the rounds of one task, and the text renderers
//! built on it.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::episode::{Direction, Termination, Trajectory};
use crate::error::RunError;
use crate::geo::{geodesic_distance, initial_bearing, signed_angle_diff};
use crate::graph::{NavGraph, NodeIdx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVisitRecord {
    pub round: u32,
    pub thoughts: String,
    pub previous_action: Option<i64>,
    pub next_action: Option<i64>,
    pub direction: Option<Direction>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMemory {
    pub visits: u32,
    pub records: Vec<NodeVisitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeOutcome {
    pub round: u32,
    pub success: bool,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMemory {
    pub from: String,
    pub to: String,
    pub outcomes: Vec<EdgeOutcome>,
}

/// One decision move of a stored round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveMemory {
    pub from: String,
    pub to: String,
    pub action: i64,
    /// Heading held on arrival at `from`.
    pub heading: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMemory {
    pub round: u32,
    pub positions: Vec<String>,
    pub moves: Vec<MoveMemory>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub node: String,
    pub lat: f64,
    pub lon: f64,
    pub heading: f64,
    pub direction: Direction,
    pub confidence: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    pub task: String,
    pub nodes: BTreeMap<String, NodeMemory>,
    pub edges: Vec<EdgeMemory>,
    pub rounds: Vec<RoundMemory>,
    /// Recent decisions of the running episode; emptied when it ends.
    pub history: VecDeque<HistoryEntry>,
    pub n_total: u32,
    pub current_round: u32,
}

/// Positions of a trajectory with retraced segments removed.
pub fn effective_path(traj: &Trajectory) -> Vec<String> {
    let mut path = vec![traj.start.clone()];
    for s in &traj.steps {
        if let Some(n) = &s.next {
            path.push(n.clone());
        }
        if let Some(b) = &s.backtrack {
            let keep = path.len().saturating_sub(b.path.len()).max(1);
            path.truncate(keep);
        }
    }
    path
}

impl MemoryStore {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            ..Self::default()
        }
    }

    pub fn read(path: impl AsRef<FsPath>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| RunError::json(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("memory store serializes")
    }

    pub fn visits(&self, id: &str) -> u32 {
        self.nodes.get(id).map_or(0, |n| n.visits)
    }

    pub fn is_visited(&self, id: &str) -> bool {
        self.visits(id) > 0
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&EdgeMemory> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn push_history(&mut self, entry: HistoryEntry, cap: usize) {
        self.history.push_back(entry);
        while self.history.len() > cap {
            self.history.pop_front();
        }
    }

    pub fn end_episode(&mut self) {
        self.history.clear();
    }

    /// Fold a finished round into the store.
    pub fn record_round(&mut self, traj: &Trajectory) {
        let round = traj.round;
        self.n_total += 1;
        self.current_round = round;
        let positions: Vec<String> = traj.positions().into_iter().map(String::from).collect();
        for p in &positions {
            self.nodes.entry(p.clone()).or_default().visits += 1;
        }
        let kept: HashSet<(String, String)> = {
            let path = effective_path(traj);
            path.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
        };
        let stopped = traj.termination == Termination::Stopped;
        let mut moves = Vec::new();
        let mut previous_action = None;
        for s in &traj.steps {
            let choice = s.choice.as_ref();
            self.nodes.entry(s.node.clone()).or_default().records.push(NodeVisitRecord {
                round,
                thoughts: choice.map_or_else(|| s.stop.rationale.clone(), |c| c.rationale.clone()),
                previous_action,
                next_action: choice.map(|c| c.action),
                direction: s.direction,
                confidence: choice.map(|c| c.confidence),
            });
            previous_action = choice.map(|c| c.action);
            let (Some(next), Some(c), Some(dir)) = (&s.next, choice, s.direction) else {
                continue;
            };
            let success = stopped && kept.contains(&(s.node.clone(), next.clone()));
            let outcome = EdgeOutcome {
                round,
                success,
                direction: dir,
            };
            match self.edges.iter_mut().find(|e| e.from == s.node && &e.to == next) {
                Some(e) => e.outcomes.push(outcome),
                None => self.edges.push(EdgeMemory {
                    from: s.node.clone(),
                    to: next.clone(),
                    outcomes: vec![outcome],
                }),
            }
            moves.push(MoveMemory {
                from: s.node.clone(),
                to: next.clone(),
                action: c.action,
                heading: s.heading,
                direction: dir,
            });
        }
        self.rounds.push(RoundMemory {
            round,
            positions,
            moves,
            termination: traj.termination,
        });
    }

    /// Neighbors of `v` whose stored edge outcomes are all failures.
    pub fn failed_neighbors(&self, g: &NavGraph, v: NodeIdx) -> Vec<NodeIdx> {
        let from = g.id(v);
        g.neighbors(v)
            .filter(|(e, _)| {
                self.edge(from, g.id(e.to))
                    .is_some_and(|m| !m.outcomes.is_empty() && m.outcomes.iter().all(|o| !o.success))
            })
            .map(|(e, _)| e.to)
            .collect()
    }
}

/// Connectivity view of prior rounds: per node in first-visit order, the
/// distinct `node -> action -> node` relations observed.
pub fn render_c1(store: &MemoryStore) -> String {
    let mut order: Vec<&str> = Vec::new();
    let mut lines: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in &store.rounds {
        for p in &r.positions {
            if !lines.contains_key(p.as_str()) {
                order.push(p);
                lines.insert(p, Vec::new());
            }
        }
        for m in &r.moves {
            let line = format!("- `{}` → **action {}** → `{}`", m.from, m.action, m.to);
            let entry = lines.entry(m.from.as_str()).or_default();
            if !entry.contains(&line) {
                entry.push(line);
            }
        }
    }
    let mut out = String::new();
    for id in order {
        let rel = &lines[id];
        if rel.is_empty() {
            continue;
        }
        let _ = writeln!(out, "### Node: {id}\n**Relationships:**");
        for l in rel {
            let _ = writeln!(out, "{l}");
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

/// Egocentric bucket for a bearing change.
pub fn direction_bucket(delta: f64) -> &'static str {
    let a = delta.abs();
    let right = delta > 0.0;
    if a <= 22.5 {
        "Front"
    } else if a <= 67.5 {
        if right {
            "Slightly right"
        } else {
            "Slightly left"
        }
    } else if a <= 157.5 {
        if right {
            "Right"
        } else {
            "Left"
        }
    } else {
        "Back"
    }
}

/// Ten-meter band containing `d`, e.g. "20-30 meters".
pub fn distance_band(d: f64) -> String {
    let lo = (d / 10.0).floor().max(0.0) as u64 * 10;
    format!("{lo}-{} meters", lo + 10)
}

/// Relative-position view of prior rounds: for each distinct hop, where the
/// next node lay relative to the heading held at the previous one.
pub fn render_c2(store: &MemoryStore, g: &NavGraph) -> String {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for m in store.rounds.iter().flat_map(|r| &r.moves) {
        let (Some(a), Some(b)) = (g.idx(&m.from), g.idx(&m.to)) else {
            continue;
        };
        let (pa, pb) = (g.node(a).pos, g.node(b).pos);
        let d = geodesic_distance(pa, pb);
        if d <= 0.0 {
            continue;
        }
        let bucket = direction_bucket(signed_angle_diff(m.heading, initial_bearing(pa, pb)));
        let block = format!(
            "### {} → {}\n- **Direction**: {bucket}\n- **Relative Position**: Distance: {}\n",
            m.from,
            m.to,
            distance_band(d)
        );
        if seen.insert(block.clone()) {
            out.push_str(&block);
            out.push('\n');
        }
    }
    out.trim_end().to_string()
}

/// Visited nodes within `h` hops of `v`, plus `v`, in node order.
pub fn r1_nodes(store: &MemoryStore, g: &NavGraph, v: NodeIdx, h: usize) -> Vec<NodeIdx> {
    let mut depth = vec![usize::MAX; g.node_count()];
    depth[v.index()] = 0;
    let mut queue = VecDeque::from([v]);
    let mut out = vec![v];
    while let Some(u) = queue.pop_front() {
        if depth[u.index()] == h {
            continue;
        }
        for (e, _) in g.neighbors(u) {
            if depth[e.to.index()] == usize::MAX {
                depth[e.to.index()] = depth[u.index()] + 1;
                queue.push_back(e.to);
                if store.is_visited(g.id(e.to)) {
                    out.push(e.to);
                }
            }
        }
    }
    out.sort();
    out
}

/// Visited nodes within `radius_m` of `v`, plus `v`, in node order.
pub fn r2_nodes(store: &MemoryStore, g: &NavGraph, v: NodeIdx, radius_m: f64) -> Vec<NodeIdx> {
    let mut out: Vec<NodeIdx> = g
        .nodes_within_radius(g.node(v).pos, radius_m)
        .into_iter()
        .filter(|&n| n == v || store.is_visited(g.id(n)))
        .collect();
    if !out.contains(&v) {
        out.push(v);
    }
    out.sort();
    out
}

/// Text snapshot of `nodes`: visit counts, per-round decisions and the
/// outcomes of stored edges between them.
pub fn render_snapshot(store: &MemoryStore, g: &NavGraph, nodes: &[NodeIdx]) -> String {
    let mut out = String::new();
    let ids: HashSet<&str> = nodes.iter().map(|&n| g.id(n)).collect();
    for &n in nodes {
        let id = g.id(n);
        let pos = g.node(n).pos;
        let mem = store.nodes.get(id);
        let _ = writeln!(
            out,
            "- node {id} ({:.6}, {:.6}): visited {} times",
            pos.lat,
            pos.lon,
            mem.map_or(0, |m| m.visits)
        );
        for r in mem.map(|m| m.records.as_slice()).unwrap_or_default() {
            let action = r.next_action.map_or_else(|| "stop".to_string(), |a| a.to_string());
            let dir = r.direction.map_or("-", |d| d.label());
            let conf = r.confidence.map_or_else(|| "-".to_string(), |c| format!("{c:.2}"));
            let _ = writeln!(
                out,
                "  - round {}: action {action} ({dir}), confidence {conf}. {}",
                r.round, r.thoughts
            );
        }
    }
    for e in store.edges.iter().filter(|e| ids.contains(e.from.as_str()) && ids.contains(e.to.as_str())) {
        let outcomes: Vec<String> = e
            .outcomes
            .iter()
            .map(|o| {
                format!(
                    "round {} {} ({})",
                    o.round,
                    if o.success { "success" } else { "failure" },
                    o.direction
                )
            })
            .collect();
        let _ = writeln!(out, "- edge {} → {}: {}", e.from, e.to, outcomes.join(", "));
    }
    out.trim_end().to_string()
}

/// The last `n` decisions of the running episode.
pub fn r3_window(history: &VecDeque<HistoryEntry>, n: usize) -> String {
    let skip = history.len().saturating_sub(n);
    let mut out = String::new();
    for h in history.iter().skip(skip) {
        let _ = writeln!(
            out,
            "- step {}: at {} ({:.6}, {:.6}) heading {:.0}, went {} with confidence {:.2}. {}",
            h.step, h.node, h.lat, h.lon, h.heading, h.direction, h.confidence, h.rationale
        );
    }
    out.trim_end().to_string()
}
