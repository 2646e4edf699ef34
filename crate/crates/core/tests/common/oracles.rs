//! Brute-force reference implementations, written independently of the
//! library code they check.

#![allow(dead_code)]

use urbannav::geo::LatLon;
use urbannav::graph::{NavGraph, NodeIdx};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
pub const UNREACHABLE: u32 = u32::MAX;

/// Haversine via atan2.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).max(0.0).sqrt())
}

/// Minimum over every monotone alignment path, enumerated recursively.
pub fn dtw(a: &[LatLon], b: &[LatLon]) -> f64 {
    fn go(a: &[LatLon], b: &[LatLon], i: usize, j: usize) -> f64 {
        let c = haversine(a[i], b[j]);
        if i == 0 && j == 0 {
            return c;
        }
        let mut best = f64::INFINITY;
        if i > 0 {
            best = best.min(go(a, b, i - 1, j));
        }
        if j > 0 {
            best = best.min(go(a, b, i, j - 1));
        }
        if i > 0 && j > 0 {
            best = best.min(go(a, b, i - 1, j - 1));
        }
        c + best
    }
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    go(a, b, a.len() - 1, b.len() - 1)
}

/// Floyd-Warshall hop counts; `d[u][v]` is the directed distance.
pub fn all_pairs_hops(g: &NavGraph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let mut d = vec![vec![UNREACHABLE; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in g.edges() {
        d[e.from.index()][e.to.index()] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == UNREACHABLE {
                continue;
            }
            for j in 0..n {
                if d[k][j] != UNREACHABLE && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn within_radius(g: &NavGraph, center: LatLon, radius_m: f64) -> Vec<NodeIdx> {
    g.nodes()
        .filter(|(_, n)| haversine(center, n.pos) <= radius_m)
        .map(|(i, _)| i)
        .collect()
}

pub fn r1(g: &NavGraph, hops: &[Vec<u32>], visited: &dyn Fn(NodeIdx) -> bool, v: NodeIdx, h: usize) -> Vec<NodeIdx> {
    g.nodes()
        .map(|(u, _)| u)
        .filter(|&u| u == v || (hops[v.index()][u.index()] as usize <= h && visited(u)))
        .collect()
}

pub fn r2(g: &NavGraph, visited: &dyn Fn(NodeIdx) -> bool, v: NodeIdx, radius_m: f64) -> Vec<NodeIdx> {
    let c = g.node(v).pos;
    g.nodes()
        .map(|(u, _)| u)
        .filter(|&u| u == v || (haversine(c, g.node(u).pos) <= radius_m && visited(u)))
        .collect()
}

/// Confidence trigger evaluated from the raw sequence of pushes.
pub fn b1(pushes: &[f64], k: usize, theta: f64) -> bool {
    if pushes.len() < k {
        return false;
    }
    let mean = pushes[pushes.len() - k..].iter().sum::<f64>() / k as f64;
    mean < theta
}

/// Distance trigger: the last k+1 values strictly increase.
pub fn b2(pushes: &[u32], k: usize) -> bool {
    pushes.len() > k && pushes[pushes.len() - k - 1..].windows(2).all(|w| w[1] > w[0])
}

/// Best action at `v` by exhaustive comparison of every option.
pub fn b3(g: &NavGraph, hops: &[Vec<u32>], v: NodeIdx, heading: f64, goal: NodeIdx) -> Option<usize> {
    let persp = urbannav::episode::perspectives(g, v, heading);
    let to_goal = |u: NodeIdx| hops[u.index()][goal.index()];
    let dv = to_goal(v);
    let first_hop = if dv == 0 || dv == UNREACHABLE {
        None
    } else {
        let mut cands: Vec<NodeIdx> = g
            .edges()
            .iter()
            .filter(|e| e.from == v && to_goal(e.to) == dv - 1)
            .map(|e| e.to)
            .collect();
        cands.sort_by(|a, b| g.id(*a).cmp(g.id(*b)));
        cands.first().copied()
    };
    let path_az = first_hop.map(|n| g.edges().iter().find(|e| e.from == v && e.to == n).unwrap().azimuth);
    let phi = |to: NodeIdx, h: f64| match path_az {
        Some(az) if dv != UNREACHABLE && dv > 0 && to_goal(to) == dv - 1 => (h - az).to_radians().cos(),
        _ => 0.0,
    };
    let best = persp.iter().map(|p| to_goal(p.to)).min()?;
    let mut winner: Option<(usize, f64)> = None;
    for p in &persp {
        if to_goal(p.to) != best {
            continue;
        }
        let f = phi(p.to, p.heading);
        if winner.is_none_or(|(_, wf)| f > wf) {
            winner = Some((p.index, f));
        }
    }
    winner.map(|(i, _)| i)
}
