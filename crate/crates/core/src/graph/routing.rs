//! Hop-count and metric shortest paths.
//!
//! Hop paths are canonical: among all minimum-hop paths the one whose node-id
//! sequence is lexicographically smallest is returned. Benchmark ground
//! truth, the oracle policies and the backtracking hint all rely on this
//! ordering.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NavGraph, NodeIdx, EDGE_LENGTH_TOLERANCE};
use crate::error::GraphError;
use crate::geo::geodesic_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    Hops,
    Meters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeIdx>,
    /// Hop count or meters depending on the weight used.
    pub cost: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn ids<'g>(&self, g: &'g NavGraph) -> Vec<&'g str> {
        self.nodes.iter().map(|&n| g.id(n)).collect()
    }
}

/// Minimum hop count between two nodes, with unreachability explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopoDistance {
    Steps(u32),
    Unreachable,
}

impl TopoDistance {
    pub fn steps(self) -> Option<u32> {
        match self {
            TopoDistance::Steps(s) => Some(s),
            TopoDistance::Unreachable => None,
        }
    }
}

impl From<Option<u32>> for TopoDistance {
    fn from(v: Option<u32>) -> Self {
        v.map_or(TopoDistance::Unreachable, TopoDistance::Steps)
    }
}

/// Hop distance from `src` to every node.
pub fn bfs_from(g: &NavGraph, src: NodeIdx) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.node_count()];
    dist[src.index()] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u.index()].unwrap();
        for (e, _) in g.neighbors(u) {
            if dist[e.to.index()].is_none() {
                dist[e.to.index()] = Some(du + 1);
                queue.push_back(e.to);
            }
        }
    }
    dist
}

/// Hop distance from every node to `dst` (BFS over reversed edges).
pub fn bfs_to(g: &NavGraph, dst: NodeIdx) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.node_count()];
    dist[dst.index()] = Some(0);
    let mut queue = VecDeque::from([dst]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v.index()].unwrap();
        for e in g.incoming(v) {
            if dist[e.from.index()].is_none() {
                dist[e.from.index()] = Some(dv + 1);
                queue.push_back(e.from);
            }
        }
    }
    dist
}

impl NavGraph {
    /// First hop of the canonical shortest path from `v` given hop
    /// distances to the target, i.e. the neighbor one step closer with the
    /// smallest node id.
    pub fn canonical_next(&self, v: NodeIdx, dist_to_goal: &[Option<u32>]) -> Option<NodeIdx> {
        let dv = dist_to_goal[v.index()]?;
        if dv == 0 {
            return None;
        }
        self.neighbors(v)
            .filter(|(e, _)| dist_to_goal[e.to.index()] == Some(dv - 1))
            .min_by(|(_, a), (_, b)| a.id.cmp(&b.id))
            .map(|(e, _)| e.to)
    }

    /// Canonical minimum-hop path, or `None` when unreachable.
    pub fn hop_path(&self, from: NodeIdx, to: NodeIdx) -> Option<Path> {
        let dist = bfs_to(self, to);
        self.hop_path_with(from, &dist)
    }

    pub(crate) fn hop_path_with(&self, from: NodeIdx, dist_to_goal: &[Option<u32>]) -> Option<Path> {
        let hops = dist_to_goal[from.index()]?;
        let mut nodes = Vec::with_capacity(hops as usize + 1);
        nodes.push(from);
        let mut cur = from;
        while let Some(next) = self.canonical_next(cur, dist_to_goal) {
            nodes.push(next);
            cur = next;
        }
        Some(Path {
            nodes,
            cost: hops as f64,
        })
    }

    /// A* over edge lengths. The heuristic is the geodesic distance scaled
    /// by the edge-length tolerance, which keeps it admissible.
    pub fn meter_path(&self, from: NodeIdx, to: NodeIdx) -> Option<Path> {
        #[derive(PartialEq)]
        struct Item {
            f: f64,
            g: f64,
            node: NodeIdx,
        }
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other
                    .f
                    .total_cmp(&self.f)
                    .then_with(|| other.node.cmp(&self.node))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let goal_pos = self.node(to).pos;
        let h = |n: NodeIdx| geodesic_distance(self.node(n).pos, goal_pos) * (1.0 - EDGE_LENGTH_TOLERANCE);
        let mut best = vec![f64::INFINITY; self.node_count()];
        let mut parent: Vec<Option<NodeIdx>> = vec![None; self.node_count()];
        let mut closed = vec![false; self.node_count()];
        best[from.index()] = 0.0;
        let mut heap = BinaryHeap::from([Item {
            f: h(from),
            g: 0.0,
            node: from,
        }]);
        while let Some(Item { g, node, .. }) = heap.pop() {
            if closed[node.index()] {
                continue;
            }
            closed[node.index()] = true;
            if node == to {
                let mut nodes = vec![to];
                let mut cur = to;
                while let Some(p) = parent[cur.index()] {
                    nodes.push(p);
                    cur = p;
                }
                nodes.reverse();
                return Some(Path { nodes, cost: g });
            }
            for (e, _) in self.neighbors(node) {
                let cand = g + e.length_m;
                if cand < best[e.to.index()] {
                    best[e.to.index()] = cand;
                    parent[e.to.index()] = Some(node);
                    heap.push(Item {
                        f: cand + h(e.to),
                        g: cand,
                        node: e.to,
                    });
                }
            }
        }
        None
    }

    pub fn shortest_path(&self, from: &str, to: &str, weight: Weight) -> Result<Option<Path>, GraphError> {
        let (a, b) = (self.require(from)?, self.require(to)?);
        Ok(match weight {
            Weight::Hops => self.hop_path(a, b),
            Weight::Meters => self.meter_path(a, b),
        })
    }

    pub fn topo_distance(&self, from: &str, to: &str) -> Result<TopoDistance, GraphError> {
        let (a, b) = (self.require(from)?, self.require(to)?);
        Ok(bfs_from(self, a)[b.index()].into())
    }

    /// Sum of edge lengths along consecutive nodes; `None` if a hop is not an edge.
    pub fn path_length_m(&self, nodes: &[NodeIdx]) -> Option<f64> {
        nodes
            .windows(2)
            .map(|w| self.edge_between(w[0], w[1]).map(|e| e.length_m))
            .sum()
    }
}
