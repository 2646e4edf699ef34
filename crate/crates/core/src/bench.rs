//! Benchmark construction: need-to-POI mappings, satisfying-node queries,
//! constrained start selection, task generation and task validation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::geo::geodesic_distance;
use crate::graph::{bfs_from, NavGraph, NodeIdx, Poi};

const DEFAULT_MAPPINGS: &str = include_str!("../data/need_mappings.json");

/// Inclusive hop bounds for ground-truth routes.
pub const DEFAULT_HOP_BOUNDS: (u32, u32) = (5, 25);
pub const DEFAULT_MIN_RADIUS_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "Basic POI")]
    BasicPoi,
    #[serde(rename = "Brand-Specific")]
    BrandSpecific,
    #[serde(rename = "Transit Hub")]
    TransitHub,
    #[serde(rename = "Latent POI")]
    LatentPoi,
    #[serde(rename = "Abstract Demand")]
    AbstractDemand,
    #[serde(rename = "Inclusive Infrastructure")]
    InclusiveInfrastructure,
    #[serde(rename = "Semantic Preference")]
    SemanticPreference,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::BasicPoi,
        Category::BrandSpecific,
        Category::TransitHub,
        Category::LatentPoi,
        Category::AbstractDemand,
        Category::InclusiveInfrastructure,
        Category::SemanticPreference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::BasicPoi => "Basic POI",
            Category::BrandSpecific => "Brand-Specific",
            Category::TransitHub => "Transit Hub",
            Category::LatentPoi => "Latent POI",
            Category::AbstractDemand => "Abstract Demand",
            Category::InclusiveInfrastructure => "Inclusive Infrastructure",
            Category::SemanticPreference => "Semantic Preference",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The satisfaction predicate of a need.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeedPredicate {
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub descriptors: Vec<String>,
}

impl NeedPredicate {
    pub fn is_empty(&self) -> bool {
        self.categories.is_empty() && self.keywords.is_empty() && self.descriptors.is_empty()
    }

    fn category_hit(&self, p: &Poi) -> bool {
        let pc = p.category.to_lowercase();
        self.categories.iter().any(|c| {
            let c = c.to_lowercase();
            pc.contains(&c) || c.contains(&pc)
        })
    }

    fn keyword_hit(&self, p: &Poi) -> bool {
        let name = p.name.to_lowercase();
        self.keywords.iter().any(|k| name.contains(&k.to_lowercase()))
    }

    fn descriptor_hit(&self, p: &Poi) -> bool {
        self.descriptors.iter().any(|d| {
            let d = d.to_lowercase();
            p.descriptors.iter().any(|pd| pd.to_lowercase().contains(&d))
        })
    }

    /// Whether `p` satisfies the need. Descriptors qualify the category and
    /// keyword terms when both kinds are present ("romantic" + "restaurant"
    /// means a romantic restaurant); otherwise any single term suffices.
    pub fn matches(&self, p: &Poi) -> bool {
        let named = self.category_hit(p) || self.keyword_hit(p);
        let has_named = !self.categories.is_empty() || !self.keywords.is_empty();
        match (has_named, self.descriptors.is_empty()) {
            (true, false) => named && self.descriptor_hit(p),
            (true, true) => named,
            (false, false) => self.descriptor_hit(p),
            (false, true) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeedMapping {
    pub category: Category,
    pub instruction: String,
    #[serde(flatten)]
    pub predicate: NeedPredicate,
}

/// The mapping catalog shipped with the crate.
pub fn default_mappings() -> Vec<NeedMapping> {
    serde_json::from_str(DEFAULT_MAPPINGS).expect("bundled mappings parse")
}

pub fn read_mappings(path: impl AsRef<FsPath>) -> Result<Vec<NeedMapping>, GraphError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Nodes with at least one visible POI satisfying `pred`, ascending by index.
pub fn query_satisfying_nodes(g: &NavGraph, pred: &NeedPredicate) -> Vec<NodeIdx> {
    g.nodes()
        .map(|(v, _)| v)
        .filter(|&v| g.visible_pois(v).any(|p| pred.matches(p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub city: String,
    pub instruction: String,
    pub category: Category,
    pub mapping: NeedPredicate,
    pub start: String,
    pub goal: String,
    pub satisfying_nodes: Vec<String>,
    pub gt_path: Vec<String>,
    pub min_radius_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub tasks: Vec<Task>,
}

impl TaskFile {
    pub fn read(path: impl AsRef<FsPath>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task file serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub hop_bounds: (u32, u32),
    pub min_radius_m: f64,
    pub city: String,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            hop_bounds: DEFAULT_HOP_BOUNDS,
            min_radius_m: DEFAULT_MIN_RADIUS_M,
            city: "synthetic".into(),
        }
    }
}

/// Hop distances from every satisfying node (symmetric because every edge
/// has a reverse).
struct SatDistances {
    sat: Vec<NodeIdx>,
    dist: Vec<Vec<Option<u32>>>,
}

impl SatDistances {
    fn new(g: &NavGraph, sat: Vec<NodeIdx>) -> Self {
        let dist = sat.iter().map(|&u| bfs_from(g, u)).collect();
        Self { sat, dist }
    }

    fn position(&self, v: NodeIdx) -> Option<usize> {
        self.sat.iter().position(|&u| u == v)
    }
}

fn start_ok(g: &NavGraph, s: NodeIdx, goal_k: usize, sd: &SatDistances, params: &TaskParams) -> bool {
    let (lo, hi) = params.hop_bounds;
    let Some(d) = sd.dist[goal_k][s.index()] else {
        return false;
    };
    if d < lo || d > hi {
        return false;
    }
    let spos = g.node(s).pos;
    sd.sat.iter().zip(&sd.dist).all(|(&u, du)| {
        geodesic_distance(spos, g.node(u).pos) > params.min_radius_m || du[s.index()].is_none_or(|h| h >= lo)
    })
}

fn start_candidates(g: &NavGraph, goal_k: usize, sd: &SatDistances, params: &TaskParams) -> Vec<NodeIdx> {
    g.nodes()
        .map(|(v, _)| v)
        .filter(|&s| start_ok(g, s, goal_k, sd, params))
        .collect()
}

/// A start node for `goal`: within the hop bounds, and with no satisfying
/// node inside `min_radius_m` that is closer than the lower hop bound.
/// Returns `None` when `goal` does not satisfy the need or no node qualifies.
pub fn select_start(g: &NavGraph, goal: NodeIdx, pred: &NeedPredicate, params: &TaskParams, seed: u64) -> Option<NodeIdx> {
    let sd = SatDistances::new(g, query_satisfying_nodes(g, pred));
    let k = sd.position(goal)?;
    let cands = start_candidates(g, k, &sd, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cands.choose(&mut rng).copied()
}

/// Is `goal` the satisfying node nearest to `s` by hops, ties by node id?
fn is_nearest(g: &NavGraph, s: NodeIdx, goal_k: usize, sd: &SatDistances) -> bool {
    let d = sd.dist[goal_k][s.index()];
    let gid = g.id(sd.sat[goal_k]);
    sd.sat.iter().zip(&sd.dist).enumerate().all(|(k, (&u, du))| {
        if k == goal_k {
            return true;
        }
        match (du[s.index()], d) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(x), Some(d)) => x > d || (x == d && g.id(u) > gid),
        }
    })
}

/// Generate one task for `mapping`. Candidate goals are tried in seeded
/// order; the first one admitting a start from which it is the nearest
/// satisfying node wins.
pub fn generate_task(g: &NavGraph, mapping: &NeedMapping, params: &TaskParams, seed: u64) -> Option<Task> {
    let sat = query_satisfying_nodes(g, &mapping.predicate);
    if sat.is_empty() {
        return None;
    }
    let sd = SatDistances::new(g, sat);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..sd.sat.len()).collect();
    order.shuffle(&mut rng);
    for k in order {
        let cands: Vec<NodeIdx> = start_candidates(g, k, &sd, params)
            .into_iter()
            .filter(|&s| is_nearest(g, s, k, &sd))
            .collect();
        let Some(&start) = cands.choose(&mut rng) else {
            continue;
        };
        let goal = sd.sat[k];
        let path = g.hop_path(start, goal)?;
        let sat_set: HashSet<NodeIdx> = sd.sat.iter().copied().collect();
        if path.nodes[1..path.nodes.len() - 1].iter().any(|n| sat_set.contains(n)) {
            continue;
        }
        let mut satisfying: Vec<String> = sd.sat.iter().map(|&u| g.id(u).to_string()).collect();
        satisfying.sort();
        return Some(Task {
            id: format!("task-{seed}"),
            city: params.city.clone(),
            instruction: mapping.instruction.clone(),
            category: mapping.category,
            mapping: mapping.predicate.clone(),
            start: g.id(start).to_string(),
            goal: g.id(goal).to_string(),
            satisfying_nodes: satisfying,
            gt_path: path.ids(g).into_iter().map(str::to_string).collect(),
            min_radius_m: params.min_radius_m,
        });
    }
    None
}

/// Generate up to `count` distinct tasks, drawing mappings uniformly from
/// `mappings`. Task ids are `t0000`, `t0001`, …
pub fn build_suite(g: &NavGraph, mappings: &[NeedMapping], count: usize, params: &TaskParams, seed: u64) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Task> = Vec::with_capacity(count);
    let mut seen = HashSet::new();
    if mappings.is_empty() {
        return out;
    }
    for _ in 0..count.saturating_mul(64) {
        if out.len() == count {
            break;
        }
        let m = &mappings[rng.gen_range(0..mappings.len())];
        let task_seed: u64 = rng.gen();
        if let Some(mut t) = generate_task(g, m, params, task_seed) {
            if seen.insert((t.instruction.clone(), t.start.clone(), t.goal.clone())) {
                t.id = format!("t{:04}", out.len());
                out.push(t);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task: String,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_task(g: &NavGraph, t: &Task) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.into(),
            passed,
            detail,
        })
    };
    let (start, goal) = (g.idx(&t.start), g.idx(&t.goal));
    let shortest = match (start, goal) {
        (Some(s), Some(e)) => bfs_from(g, s)[e.index()],
        _ => None,
    };
    push(
        "endpoints-connected",
        shortest.is_some(),
        match (start, goal, shortest) {
            (None, _, _) => format!("unknown start `{}`", t.start),
            (_, None, _) => format!("unknown goal `{}`", t.goal),
            (_, _, None) => "goal unreachable from start".into(),
            (_, _, Some(d)) => format!("{d} hops"),
        },
    );

    let path: Option<Vec<NodeIdx>> = t.gt_path.iter().map(|id| g.idx(id)).collect();
    let path_detail;
    let path_ok = match (&path, shortest) {
        (Some(p), Some(d)) if !p.is_empty() => {
            let anchored = Some(p[0]) == start && p.last().copied() == goal;
            let walkable = p.windows(2).all(|w| g.edge_between(w[0], w[1]).is_some());
            let hops = p.len() - 1;
            path_detail = format!("path has {hops} hops, shortest is {d}");
            anchored && walkable && hops == d as usize
        }
        (None, _) => {
            path_detail = "path references unknown nodes".into();
            false
        }
        _ => {
            path_detail = "no shortest path to compare against".into();
            false
        }
    };
    push("path-is-shortest", path_ok, path_detail);

    let hops = t.gt_path.len().saturating_sub(1) as u32;
    let (lo, hi) = DEFAULT_HOP_BOUNDS;
    push(
        "length-in-[5,25]",
        (lo..=hi).contains(&hops),
        format!("{hops} hops, bounds [{lo}, {hi}]"),
    );

    let sat: HashSet<NodeIdx> = query_satisfying_nodes(g, &t.mapping).into_iter().collect();
    push(
        "goal-satisfies",
        goal.is_some_and(|e| sat.contains(&e)),
        format!("goal `{}`", t.goal),
    );

    let dirty: Vec<&str> = match &path {
        Some(p) if p.len() > 2 => p[1..p.len() - 1]
            .iter()
            .filter(|n| sat.contains(n))
            .map(|&n| g.id(n))
            .collect(),
        _ => Vec::new(),
    };
    push(
        "interior-clean",
        dirty.is_empty() && path.is_some(),
        if dirty.is_empty() {
            "no satisfying interior node".into()
        } else {
            format!("satisfying interior nodes: {}", dirty.join(", "))
        },
    );
    ValidationReport {
        task: t.id.clone(),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::graph::GraphFile;
    use crate::synth::{generate_city_file, CitySpec};

    fn poi(id: &str, name: &str, category: &str, descriptors: &[&str], at: LatLon) -> Poi {
        Poi {
            id: id.into(),
            name: name.into(),
            category: category.into(),
            descriptors: descriptors.iter().map(|s| s.to_string()).collect(),
            lat: at.lat,
            lon: at.lon,
        }
    }

    /// Grid with POIs placed 1 m east of the named nodes.
    fn grid_with(rows: usize, cols: usize, pois: &[(&str, Poi)]) -> NavGraph {
        let mut f: GraphFile = generate_city_file(&CitySpec::grid(rows, cols, 0)).unwrap();
        for (node, p) in pois {
            let n = f.nodes.iter().find(|n| &n.id == node).unwrap();
            let at = LatLon { lat: n.lat, lon: n.lon }.offset_m(0.0, 1.0);
            f.pois.push(Poi {
                lat: at.lat,
                lon: at.lon,
                ..p.clone()
            });
        }
        // keep links tight so each POI is tagged to one node only
        f.relink_visibility(5.0);
        NavGraph::from_file(f).unwrap()
    }

    fn o() -> LatLon {
        LatLon { lat: 0.0, lon: 0.0 }
    }

    fn ids(g: &NavGraph, v: &[NodeIdx]) -> Vec<String> {
        v.iter().map(|&n| g.id(n).to_string()).collect()
    }

    #[test]
    fn single_cafe_is_found() {
        let g = grid_with(3, 3, &[("n1_1", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let pred = NeedPredicate {
            categories: vec!["Cafe".into()],
            ..Default::default()
        };
        assert_eq!(ids(&g, &query_satisfying_nodes(&g, &pred)), ["n1_1"]);
    }

    #[test]
    fn descriptor_only_mapping() {
        let g = grid_with(
            3,
            3,
            &[
                ("n0_1", poi("a", "Luna", "Restaurant", &["Romantic"], o())),
                ("n2_2", poi("b", "Harbor Grill", "Restaurant", &["Groups"], o())),
            ],
        );
        let pred = NeedPredicate {
            descriptors: vec!["Romantic".into()],
            ..Default::default()
        };
        assert_eq!(ids(&g, &query_satisfying_nodes(&g, &pred)), ["n0_1"]);
    }

    #[test]
    fn keyword_matches_name_regardless_of_category() {
        let g = grid_with(3, 3, &[("n2_0", poi("a", "Hyde Park", "Tourist attraction", &[], o()))]);
        let pred = NeedPredicate {
            keywords: vec!["park".into()],
            ..Default::default()
        };
        assert_eq!(ids(&g, &query_satisfying_nodes(&g, &pred)), ["n2_0"]);
    }

    #[test]
    fn category_match_is_bidirectional_substring() {
        let p = poi("a", "Ichiran", "Ramen restaurant", &[], o());
        let pred = NeedPredicate {
            categories: vec!["restaurant".into()],
            ..Default::default()
        };
        assert!(pred.matches(&p));
        let pred = NeedPredicate {
            categories: vec!["Gym and fitness centre".into()],
            ..Default::default()
        };
        assert!(pred.matches(&poi("b", "FitLab", "gym", &[], o())));
    }

    #[test]
    fn descriptors_qualify_categories() {
        let pred = NeedPredicate {
            categories: vec!["restaurant".into(), "diner".into()],
            descriptors: vec!["Groups".into(), "Family-friendly".into()],
            ..Default::default()
        };
        assert!(pred.matches(&poi("a", "X", "Diner", &["Family-friendly"], o())));
        assert!(!pred.matches(&poi("b", "Y", "Diner", &[], o())));
        assert!(!pred.matches(&poi("c", "Z", "Park", &["Family-friendly"], o())));
    }

    #[test]
    fn bundled_mappings_cover_all_categories() {
        let ms = default_mappings();
        for c in Category::ALL {
            assert!(ms.iter().any(|m| m.category == c), "{c}");
        }
        assert!(ms.iter().all(|m| !m.predicate.is_empty()));
        let thirsty = ms
            .iter()
            .find(|m| m.instruction.starts_with("I'm feeling thirsty"))
            .unwrap();
        assert!(thirsty.predicate.categories.contains(&"Water fountain".to_string()));
    }

    #[test]
    fn category_serializes_with_display_name() {
        let s = serde_json::to_string(&Category::InclusiveInfrastructure).unwrap();
        assert_eq!(s, "\"Inclusive Infrastructure\"");
    }

    fn cafe_mapping() -> NeedMapping {
        NeedMapping {
            category: Category::BasicPoi,
            instruction: "Please find the nearest cafe.".into(),
            predicate: NeedPredicate {
                categories: vec!["Cafe".into()],
                ..Default::default()
            },
        }
    }

    #[test]
    fn three_by_three_grid_cannot_meet_bounds() {
        let g = grid_with(3, 3, &[("n0_0", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let goal = g.idx("n0_0").unwrap();
        let params = TaskParams {
            min_radius_m: 0.0,
            ..Default::default()
        };
        assert_eq!(select_start(&g, goal, &cafe_mapping().predicate, &params, 1), None);
    }

    #[test]
    fn start_selection_is_seeded_and_bounded() {
        let g = grid_with(8, 8, &[("n0_0", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let goal = g.idx("n0_0").unwrap();
        let params = TaskParams {
            min_radius_m: 0.0,
            ..Default::default()
        };
        let pred = cafe_mapping().predicate;
        let a = select_start(&g, goal, &pred, &params, 9).unwrap();
        assert_eq!(select_start(&g, goal, &pred, &params, 9), Some(a));
        let d = bfs_from(&g, a)[goal.index()].unwrap();
        assert!((5..=25).contains(&d));
    }

    #[test]
    fn nearby_twin_rejects_close_starts() {
        // cafés 40 m apart on row 0; every start within 100 m of either
        // café that is fewer than 5 hops from it must be rejected
        let g = grid_with(
            8,
            8,
            &[
                ("n0_0", poi("a", "Blue Door", "Cafe", &[], o())),
                ("n0_2", poi("b", "Morning Bean", "Cafe", &[], o())),
            ],
        );
        let pred = cafe_mapping().predicate;
        let params = TaskParams::default();
        let goal = g.idx("n0_0").unwrap();
        let sat = query_satisfying_nodes(&g, &pred);
        for seed in 0..40 {
            let s = select_start(&g, goal, &pred, &params, seed).unwrap();
            let from_s = bfs_from(&g, s);
            for &u in &sat {
                let near = geodesic_distance(g.node(s).pos, g.node(u).pos) <= 100.0;
                assert!(!near || from_s[u.index()].unwrap() >= 5);
            }
        }
    }

    #[test]
    fn generated_task_is_valid_and_uses_bfs_path() {
        let g = grid_with(10, 10, &[("n9_9", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let t = generate_task(&g, &cafe_mapping(), &TaskParams::default(), 4).unwrap();
        assert_eq!(t.goal, "n9_9");
        let s = g.idx(&t.start).unwrap();
        let d = bfs_from(&g, s)[g.idx("n9_9").unwrap().index()].unwrap();
        assert_eq!(t.gt_path.len() - 1, d as usize);
        assert!(validate_task(&g, &t).passed());
        assert_eq!(generate_task(&g, &cafe_mapping(), &TaskParams::default(), 4), Some(t));
    }

    #[test]
    fn no_satisfying_nodes_no_task() {
        let g = grid_with(6, 6, &[]);
        assert!(generate_task(&g, &cafe_mapping(), &TaskParams::default(), 0).is_none());
    }

    fn line_graph(n: usize, cafes: &[usize]) -> NavGraph {
        let mut f = generate_city_file(&CitySpec::grid(1, n, 0)).unwrap();
        for &i in cafes {
            let at = LatLon {
                lat: f.nodes[i].lat,
                lon: f.nodes[i].lon,
            }
            .offset_m(1.0, 0.0);
            f.pois.push(poi(&format!("c{i}"), &format!("Cafe {i}"), "Cafe", &[], at));
        }
        f.relink_visibility(5.0);
        NavGraph::from_file(f).unwrap()
    }

    #[test]
    fn cafe_behind_another_cafe_is_unreachable() {
        // A-B-C-D-E with cafés at C and E: C is too close to every start,
        // and every start far enough from E reaches C first
        let g = line_graph(5, &[2, 4]);
        let params = TaskParams {
            hop_bounds: (3, 4),
            min_radius_m: 0.0,
            ..Default::default()
        };
        for seed in 0..50 {
            assert!(generate_task(&g, &cafe_mapping(), &params, seed).is_none());
        }
        // without the café at C the same geometry is feasible
        let g = line_graph(5, &[4]);
        assert!(generate_task(&g, &cafe_mapping(), &params, 0).is_some());
    }

    #[test]
    fn lengthened_path_fails_shortest_check() {
        let g = grid_with(10, 10, &[("n9_9", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let mut t = generate_task(&g, &cafe_mapping(), &TaskParams::default(), 4).unwrap();
        let first = t.gt_path[0].clone();
        let second = t.gt_path[1].clone();
        t.gt_path.splice(1..1, [second, first]);
        let r = validate_task(&g, &t);
        assert!(!r.check("path-is-shortest").unwrap().passed);
        assert!(!r.passed());
    }

    #[test]
    fn deleted_goal_poi_fails_goal_check() {
        let g = grid_with(10, 10, &[("n9_9", poi("p", "Blue Door", "Cafe", &[], o()))]);
        let t = generate_task(&g, &cafe_mapping(), &TaskParams::default(), 4).unwrap();
        let mut f = g.to_file();
        f.pois.clear();
        f.visibility.clear();
        let bare = NavGraph::from_file(f).unwrap();
        let r = validate_task(&bare, &t);
        assert!(!r.check("goal-satisfies").unwrap().passed);
        assert!(r.check("path-is-shortest").unwrap().passed);
    }

    #[test]
    fn suite_has_unique_ids() {
        let f = generate_city_file(&CitySpec::grid(12, 12, 3).with_poi_density(0.08)).unwrap();
        let g = NavGraph::from_file(f).unwrap();
        let tasks = build_suite(&g, &default_mappings(), 10, &TaskParams::default(), 1);
        assert!(!tasks.is_empty());
        for (i, t) in tasks.iter().enumerate() {
            assert_eq!(t.id, format!("t{i:04}"));
            assert!(validate_task(&g, t).passed(), "{:?}", validate_task(&g, t));
        }
    }
}
