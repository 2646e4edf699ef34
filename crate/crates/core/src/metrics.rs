//! Episode metrics and their aggregation.
//!
//! Success metrics (TCE, TCP, TCC) require that the agent chose to stop.
//! SPL weights TCP at 50 m by the ratio of ground-truth to traversed meters.
//! nDTW is the DTW alignment cost in meters divided by the reference length,
//! so lower is better.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::{Category, Task};
use crate::episode::{Termination, Trajectory};
use crate::error::GraphError;
use crate::geo::{geodesic_distance, LatLon};
use crate::graph::NavGraph;

/// Radii reported in the metric tables.
pub const TCP_THRESHOLDS_M: [f64; 3] = [40.0, 50.0, 60.0];
/// Radius whose success weights SPL.
pub const SPL_THRESHOLD_M: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub task: String,
    pub round: u32,
    pub category: Category,
    pub city: String,
    pub termination: Termination,
    pub tce: bool,
    /// Success within each radius, keyed by whole meters.
    pub tcp: BTreeMap<u32, bool>,
    pub tcc: bool,
    pub spl: f64,
    pub spd: f64,
    pub ndtw: f64,
    pub steps: usize,
}

impl EpisodeMetrics {
    pub fn tcp_at(&self, d: f64) -> bool {
        self.tcp.get(&(d.round() as u32)).copied().unwrap_or(false)
    }
}

fn pos(g: &NavGraph, id: &str) -> Result<LatLon, GraphError> {
    Ok(g.node(g.require(id)?).pos)
}

fn stopped(traj: &Trajectory) -> bool {
    traj.termination == Termination::Stopped
}

pub fn tce(traj: &Trajectory, task: &Task) -> bool {
    stopped(traj) && traj.terminal == task.goal
}

pub fn spd(g: &NavGraph, traj: &Trajectory, task: &Task) -> Result<f64, GraphError> {
    Ok(geodesic_distance(pos(g, &traj.terminal)?, pos(g, &task.goal)?))
}

pub fn tcp(g: &NavGraph, traj: &Trajectory, task: &Task, d: f64) -> Result<bool, GraphError> {
    Ok(stopped(traj) && spd(g, traj, task)? <= d)
}

/// Stopped at a node whose visible POIs satisfy the task's need.
pub fn tcc(g: &NavGraph, traj: &Trajectory, task: &Task) -> Result<bool, GraphError> {
    if !stopped(traj) {
        return Ok(false);
    }
    let v = g.require(&traj.terminal)?;
    Ok(task.satisfying_nodes.iter().any(|n| n == &traj.terminal)
        || (!task.mapping.is_empty() && g.visible_pois(v).any(|p| task.mapping.matches(p))))
}

/// Meters along consecutive positions; hops that are not edges count their
/// geodesic length.
pub fn traversed_m(g: &NavGraph, positions: &[&str]) -> Result<f64, GraphError> {
    let mut total = 0.0;
    for w in positions.windows(2) {
        let (a, b) = (g.require(w[0])?, g.require(w[1])?);
        total += match g.edge_between(a, b) {
            Some(e) => e.length_m,
            None => geodesic_distance(g.node(a).pos, g.node(b).pos),
        };
    }
    Ok(total)
}

pub fn spl(g: &NavGraph, traj: &Trajectory, task: &Task) -> Result<f64, GraphError> {
    if !tcp(g, traj, task, SPL_THRESHOLD_M)? {
        return Ok(0.0);
    }
    let gt: Vec<&str> = task.gt_path.iter().map(String::as_str).collect();
    let l = traversed_m(g, &gt)?;
    let p = traversed_m(g, &traj.positions())?;
    let m = l.max(p);
    Ok(if m > 0.0 { l / m } else { 1.0 })
}

/// Dynamic time warping with geodesic local cost.
pub fn dtw(a: &[LatLon], b: &[LatLon]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for x in a {
        cur[0] = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = geodesic_distance(*x, *y) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

pub fn ndtw(g: &NavGraph, traj: &Trajectory, task: &Task) -> Result<f64, GraphError> {
    let a = traj.positions().into_iter().map(|id| pos(g, id)).collect::<Result<Vec<_>, _>>()?;
    let b = task.gt_path.iter().map(|id| pos(g, id)).collect::<Result<Vec<_>, _>>()?;
    if b.is_empty() {
        return Ok(0.0);
    }
    Ok(dtw(&a, &b) / b.len() as f64)
}

pub fn evaluate(g: &NavGraph, traj: &Trajectory, task: &Task) -> Result<EpisodeMetrics, GraphError> {
    let mut radii: Vec<f64> = TCP_THRESHOLDS_M.to_vec();
    radii.extend(traj.config.tcp_thresholds.iter().copied());
    let mut tcp_map = BTreeMap::new();
    for d in radii {
        tcp_map.insert(d.round() as u32, tcp(g, traj, task, d)?);
    }
    Ok(EpisodeMetrics {
        task: task.id.clone(),
        round: traj.round,
        category: task.category,
        city: task.city.clone(),
        termination: traj.termination,
        tce: tce(traj, task),
        tcp: tcp_map,
        tcc: tcc(g, traj, task)?,
        spl: spl(g, traj, task)?,
        spd: spd(g, traj, task)?,
        ndtw: ndtw(g, traj, task)?,
        steps: traj.moves,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Overall,
    Category,
    City,
}

/// Means over one group. Rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub group: String,
    pub count: usize,
    #[serde(rename = "TCE")]
    pub tce: f64,
    #[serde(rename = "TCP-40m")]
    pub tcp40: f64,
    #[serde(rename = "TCP-50m")]
    pub tcp50: f64,
    #[serde(rename = "TCP-60m")]
    pub tcp60: f64,
    #[serde(rename = "TCC")]
    pub tcc: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
    #[serde(rename = "SPD")]
    pub spd: f64,
    #[serde(rename = "nDTW")]
    pub ndtw: f64,
    #[serde(rename = "AS")]
    pub steps: f64,
}

fn mean_row(group: String, ms: &[&EpisodeMetrics]) -> MetricRow {
    let n = ms.len() as f64;
    let rate = |f: &dyn Fn(&EpisodeMetrics) -> bool| ms.iter().filter(|m| f(m)).count() as f64 / n;
    let avg = |f: &dyn Fn(&EpisodeMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
    MetricRow {
        group,
        count: ms.len(),
        tce: rate(&|m| m.tce),
        tcp40: rate(&|m| m.tcp_at(40.0)),
        tcp50: rate(&|m| m.tcp_at(50.0)),
        tcp60: rate(&|m| m.tcp_at(60.0)),
        tcc: rate(&|m| m.tcc),
        spl: avg(&|m| m.spl),
        spd: avg(&|m| m.spd),
        ndtw: avg(&|m| m.ndtw),
        steps: avg(&|m| m.steps as f64),
    }
}

pub const OVERALL: &str = "Overall";

/// Group means in a fixed order: categories in their canonical order (or
/// cities sorted by name), then the overall row. Empty groups are omitted.
pub fn aggregate(metrics: &[EpisodeMetrics], by: GroupBy) -> Vec<MetricRow> {
    if metrics.is_empty() {
        return Vec::new();
    }
    let mut rows = Vec::new();
    match by {
        GroupBy::Overall => {}
        GroupBy::Category => {
            for c in Category::ALL {
                let ms: Vec<&EpisodeMetrics> = metrics.iter().filter(|m| m.category == c).collect();
                if !ms.is_empty() {
                    rows.push(mean_row(c.name().to_string(), &ms));
                }
            }
        }
        GroupBy::City => {
            let mut cities: BTreeMap<&str, Vec<&EpisodeMetrics>> = BTreeMap::new();
            for m in metrics {
                cities.entry(&m.city).or_default().push(m);
            }
            rows.extend(cities.into_iter().map(|(c, ms)| mean_row(c.to_string(), &ms)));
        }
    }
    let all: Vec<&EpisodeMetrics> = metrics.iter().collect();
    rows.push(mean_row(OVERALL.to_string(), &all));
    rows
}

pub const CSV_HEADER: &str = "group,count,TCE,TCP-40m,TCP-50m,TCP-60m,TCC,SPL,SPD,nDTW,AS";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rates as percentages with one decimal, distances and steps with two.
pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let pct = |x: f64| format!("{:.1}", x * 100.0);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.2},{:.2},{:.2}",
            csv_field(&r.group),
            r.count,
            pct(r.tce),
            pct(r.tcp40),
            pct(r.tcp50),
            pct(r.tcp60),
            pct(r.tcc),
            pct(r.spl),
            r.spd,
            r.ndtw,
            r.steps
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{Decision, EpisodeConfig, Phase, StepRecord};
    use crate::fixtures::{grid_graph, grid_id, task_between};
    use crate::seed::rng;
    use rand::Rng;

    fn walk(task: &Task, positions: &[String], termination: Termination) -> Trajectory {
        let steps = positions
            .windows(2)
            .enumerate()
            .map(|(i, w)| StepRecord {
                index: i,
                node: w[0].clone(),
                heading: 0.0,
                distance_to_goal: None,
                stop: Decision::new(Phase::Stop, 0, 1.0, ""),
                choice: Some(Decision::new(Phase::Choice, 0, 1.0, "")),
                next: Some(w[1].clone()),
                direction: None,
                backtrack: None,
                wall_ms: 0.0,
            })
            .collect();
        Trajectory {
            task: task.id.clone(),
            round: 1,
            start: positions[0].clone(),
            steps,
            terminal: positions.last().unwrap().clone(),
            termination,
            moves: positions.len() - 1,
            error: None,
            config: EpisodeConfig::default(),
        }
    }

    fn setup() -> (NavGraph, Task) {
        let g = grid_graph(4, 6);
        let t = task_between(&g, "t", &grid_id(4, 6, 0, 0), &grid_id(4, 6, 0, 5));
        (g, t)
    }

    #[test]
    fn oracle_walk_is_perfect() {
        let (g, t) = setup();
        let tr = walk(&t, &t.gt_path, Termination::Stopped);
        let m = evaluate(&g, &tr, &t).unwrap();
        assert!(m.tce && m.tcc && m.tcp_at(40.0));
        assert!((m.spl - 1.0).abs() < 1e-12);
        assert_eq!((m.spd, m.ndtw), (0.0, 0.0));
    }

    #[test]
    fn cap_at_goal_is_not_success() {
        let (g, t) = setup();
        let m = evaluate(&g, &walk(&t, &t.gt_path, Termination::StepCap), &t).unwrap();
        assert!(!m.tce && !m.tcc && !m.tcp_at(60.0));
        assert_eq!(m.spl, 0.0);
        assert_eq!(m.spd, 0.0);
    }

    #[test]
    fn one_short_and_detour() {
        let (g, t) = setup();
        let short = &t.gt_path[..t.gt_path.len() - 1];
        let m = evaluate(&g, &walk(&t, short, Termination::Stopped), &t).unwrap();
        assert!(!m.tce && m.tcp_at(40.0));
        assert!((m.spd - 20.0).abs() < 1e-6, "{}", m.spd);
        // out along row 0, a detour through row 1 and back: p = 2 l
        let mut p: Vec<String> = (0..6).map(|c| grid_id(4, 6, 0, c)).collect();
        p.push(grid_id(4, 6, 1, 5));
        p.extend((0..5).rev().map(|c| grid_id(4, 6, 1, c)));
        p.push(grid_id(4, 6, 0, 0));
        p.extend((1..6).map(|c| grid_id(4, 6, 0, c)));
        let tr = walk(&t, &p, Termination::Stopped);
        let m = evaluate(&g, &tr, &t).unwrap();
        let l = 100.0;
        let walked = traversed_m(&g, &tr.positions()).unwrap();
        assert!((m.spl - l / walked).abs() < 1e-6);
        assert!(walked > l);
    }

    #[test]
    fn parallel_offset_ndtw() {
        // three reference nodes, the agent walks the parallel row 20 m north
        let g = grid_graph(2, 3);
        let t = task_between(&g, "t", &grid_id(2, 3, 0, 0), &grid_id(2, 3, 0, 2));
        let p: Vec<String> = (0..3).map(|c| grid_id(2, 3, 1, c)).collect();
        let m = evaluate(&g, &walk(&t, &p, Termination::Stopped), &t).unwrap();
        assert!((m.ndtw - 20.0).abs() < 1e-6, "{}", m.ndtw);
    }

    /// Minimum cost over every monotone alignment, by exhaustive recursion.
    fn brute_dtw(a: &[LatLon], b: &[LatLon], i: usize, j: usize) -> f64 {
        let c = geodesic_distance(a[i], b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            return c;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(brute_dtw(a, b, i + 1, j));
        }
        if j + 1 < b.len() {
            best = best.min(brute_dtw(a, b, i, j + 1));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(brute_dtw(a, b, i + 1, j + 1));
        }
        c + best
    }

    #[test]
    fn dtw_matches_exhaustive_alignment() {
        let mut r = rng(5);
        let pt = |r: &mut rand_chacha::ChaCha8Rng| LatLon {
            lat: r.gen_range(-0.01..0.01),
            lon: r.gen_range(-0.01..0.01),
        };
        for _ in 0..200 {
            let a: Vec<LatLon> = (0..r.gen_range(1..=7)).map(|_| pt(&mut r)).collect();
            let b: Vec<LatLon> = (0..r.gen_range(1..=7)).map(|_| pt(&mut r)).collect();
            let fast = dtw(&a, &b);
            let slow = brute_dtw(&a, &b, 0, 0);
            assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn aggregation_order_and_csv() {
        let (g, t) = setup();
        assert!(aggregate(&[], GroupBy::Category).is_empty());
        let m1 = evaluate(&g, &walk(&t, &t.gt_path, Termination::Stopped), &t).unwrap();
        let mut m2 = evaluate(&g, &walk(&t, &t.gt_path[..2], Termination::StepCap), &t).unwrap();
        m2.category = Category::TransitHub;
        let rows = aggregate(&[m1.clone(), m2], GroupBy::Category);
        let names: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(names, vec!["Basic POI", "Transit Hub", OVERALL]);
        assert_eq!(rows[2].tce, 0.5);
        assert_eq!(rows[2].count, 2);
        let single = aggregate(&[m1], GroupBy::Overall);
        assert_eq!(single.len(), 1);
        let csv = to_csv(&single);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "Overall,1,100.0,100.0,100.0,100.0,100.0,100.0,0.00,0.00,5.00");
    }
}
