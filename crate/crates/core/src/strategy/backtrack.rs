//! Backtracking triggers, revert targets and the corrective hint.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::episode::perspectives;
use crate::graph::{NavGraph, NodeIdx};

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_THETA: f64 = 0.75;

/// Confidences of the last `k` moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceWindow {
    pub k: usize,
    pub theta: f64,
    values: VecDeque<f64>,
}

impl ConfidenceWindow {
    pub fn new(k: usize, theta: f64) -> Self {
        Self {
            k,
            theta,
            values: VecDeque::with_capacity(k),
        }
    }

    pub fn push(&mut self, c: f64) {
        if self.values.len() == self.k {
            self.values.pop_front();
        }
        self.values.push_back(c.clamp(0.0, 1.0));
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn is_full(&self) -> bool {
        self.k > 0 && self.values.len() == self.k
    }
}

/// Hop distances to the goal after each of the last `k` moves, plus the
/// one before them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceWindow {
    pub k: usize,
    values: VecDeque<u32>,
}

impl DistanceWindow {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            values: VecDeque::with_capacity(k + 1),
        }
    }

    pub fn push(&mut self, d: u32) {
        if self.values.len() == self.k + 1 {
            self.values.pop_front();
        }
        self.values.push_back(d);
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.values.iter().copied()
    }

    pub fn is_full(&self) -> bool {
        self.k > 0 && self.values.len() == self.k + 1
    }
}

/// Fires when the window is full and its mean confidence is strictly below
/// the threshold.
pub fn b1_should_backtrack(w: &ConfidenceWindow) -> bool {
    w.is_full() && w.values().sum::<f64>() / (w.k as f64) < w.theta
}

/// Fires when every consecutive pair of the full window strictly increases.
pub fn b2_should_backtrack(w: &DistanceWindow) -> bool {
    w.is_full() && w.values.iter().zip(w.values.iter().skip(1)).all(|(a, b)| b > a)
}

/// Revert target for the confidence triggers, as an index into `path`.
///
/// `confidence[i]` belongs to the move that arrived at `path[i]`. The target
/// is the node reached by the most recent move among the last `k` whose
/// confidence is at least `theta`; failing that, the node `k` moves back.
/// Never before the start.
pub fn confidence_target(confidence: &[f64], k: usize, theta: f64) -> usize {
    let last = confidence.len().saturating_sub(1);
    let floor = last.saturating_sub(k);
    (floor + 1..=last)
        .rev()
        .find(|&i| i < last && confidence[i] >= theta)
        .unwrap_or(floor)
}

/// Revert target for the distance trigger: the node before the drift began.
pub fn distance_target(path_len: usize, k: usize) -> usize {
    path_len.saturating_sub(1).saturating_sub(k)
}

/// Action index at `v` (facing `heading`) that minimizes the next hop
/// distance to the goal. Ties prefer the action whose azimuth is closest to
/// the canonical shortest path's first edge among those that start some
/// shortest path, then the lowest index.
pub fn b3_hint(g: &NavGraph, v: NodeIdx, heading: f64, dist_to_goal: &[Option<u32>]) -> Option<usize> {
    let persp = perspectives(g, v, heading);
    let d = |n: NodeIdx| dist_to_goal[n.index()].map_or(u64::MAX, u64::from);
    let best = persp.iter().map(|p| d(p.to)).min()?;
    let dv = dist_to_goal[v.index()];
    let on_shortest = |n: NodeIdx| matches!(dv, Some(x) if x > 0 && dist_to_goal[n.index()] == Some(x - 1));
    let theta_path = g
        .canonical_next(v, dist_to_goal)
        .and_then(|n| g.edge_between(v, n))
        .map(|e| e.azimuth);
    let phi = |p: &crate::episode::Perspective| match theta_path {
        Some(tp) if on_shortest(p.to) => (p.heading - tp).to_radians().cos(),
        _ => 0.0,
    };
    persp
        .iter()
        .filter(|p| d(p.to) == best)
        .fold(None::<(usize, f64)>, |acc, p| {
            let f = phi(p);
            match acc {
                Some((_, bf)) if bf >= f => acc,
                _ => Some((p.index, f)),
            }
        })
        .map(|(i, _)| i)
}
