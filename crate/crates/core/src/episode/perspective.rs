use serde::{Deserialize, Serialize};

use crate::geo::signed_angle_diff;
use crate::graph::{NavGraph, NodeIdx};

/// Egocentric direction of a perspective relative to the current heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Forward,
    Right,
    Back,
    Left,
}

impl Direction {
    pub fn from_delta(delta: f64) -> Self {
        if delta.abs() <= 45.0 {
            Direction::Forward
        } else if delta > 45.0 && delta <= 135.0 {
            Direction::Right
        } else if (-135.0..-45.0).contains(&delta) {
            Direction::Left
        } else {
            Direction::Back
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Forward => "FORWARD",
            Direction::Right => "RIGHT",
            Direction::Back => "BACK",
            Direction::Left => "LEFT",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One selectable outgoing edge as seen from the agent's current heading.
#[derive(Debug, Clone, PartialEq)]
pub struct Perspective {
    pub index: usize,
    pub heading: f64,
    pub direction: Direction,
    /// Signed turn from the current heading, in (-180, 180].
    pub delta: f64,
    pub to: NodeIdx,
}

/// Outgoing edges of `v` ordered FORWARD first, then clockwise.
pub fn perspectives(g: &NavGraph, v: NodeIdx, current_heading: f64) -> Vec<Perspective> {
    let mut out: Vec<(f64, Perspective)> = g
        .neighbors(v)
        .map(|(e, _)| {
            let delta = signed_angle_diff(current_heading, e.azimuth);
            let key = (delta + 45.0).rem_euclid(360.0);
            (
                key,
                Perspective {
                    index: 0,
                    heading: e.azimuth,
                    direction: Direction::from_delta(delta),
                    delta,
                    to: e.to,
                },
            )
        })
        .collect();
    out.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.heading.total_cmp(&b.1.heading))
            .then_with(|| g.id(a.1.to).cmp(g.id(b.1.to)))
    });
    out.into_iter()
        .enumerate()
        .map(|(i, (_, mut p))| {
            p.index = i;
            p
        })
        .collect()
}

/// Heading an agent faces when placed on `v` without history: the
/// lowest-azimuth outgoing edge, or 0 for an isolated node.
pub fn initial_heading(g: &NavGraph, v: NodeIdx) -> f64 {
    g.neighbors(v).next().map_or(0.0, |(e, _)| e.azimuth)
}

/// Letter label used by the choice prompt (A, B, …, Z, AA, AB, …).
pub fn index_letter(i: usize) -> String {
    let mut n = i + 1;
    let mut s = Vec::new();
    while n > 0 {
        n -= 1;
        s.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Inverse of [`index_letter`]; `None` for anything that is not a letter run.
pub fn letter_index(s: &str) -> Option<usize> {
    if s.is_empty() || s.len() > 4 || !s.bytes().all(|b| b.is_ascii_alphabetic()) {
        return None;
    }
    let mut n = 0usize;
    for b in s.bytes() {
        n = n * 26 + (b.to_ascii_uppercase() - b'A') as usize + 1;
    }
    Some(n - 1)
}
