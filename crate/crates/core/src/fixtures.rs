//! Ready-made graphs and tasks for tests, benchmarks and demos.

use crate::bench::{build_suite, default_mappings, Category, NeedPredicate, Task, TaskParams};
use crate::graph::NavGraph;
use crate::synth::{generate_city, City, CitySpec};

/// POI density used by the demo city.
pub const DEMO_POI_DENSITY: f64 = 0.06;

/// Bare `rows` x `cols` grid with 20 m spacing and no POIs. Row 0 is the
/// southern edge, column 0 the western edge.
pub fn grid_graph(rows: usize, cols: usize) -> NavGraph {
    generate_city(&CitySpec::grid(rows, cols, 0)).expect("grid spec is valid").graph
}

/// Node id of grid cell `(r, c)` in a `rows` x `cols` grid.
pub fn grid_id(rows: usize, cols: usize, r: usize, c: usize) -> String {
    let w = |n: usize| (n.max(2) - 1).to_string().len();
    format!("n{r:0wr$}_{c:0wc$}", wr = w(rows), wc = w(cols))
}

/// A task from `start` to `goal` whose ground truth is the canonical hop
/// path. The mapping is empty, so only the goal counts as satisfying.
pub fn task_between(g: &NavGraph, id: &str, start: &str, goal: &str) -> Task {
    let (s, t) = (g.require(start).expect("start exists"), g.require(goal).expect("goal exists"));
    let gt_path = g
        .hop_path(s, t)
        .map(|p| p.ids(g).into_iter().map(String::from).collect())
        .unwrap_or_default();
    Task {
        id: id.into(),
        city: "fixture".into(),
        instruction: format!("Walk to {goal}"),
        category: Category::BasicPoi,
        mapping: NeedPredicate::default(),
        start: start.into(),
        goal: goal.into(),
        satisfying_nodes: vec![goal.into()],
        gt_path,
        min_radius_m: 0.0,
    }
}

/// Seeded `size` x `size` synthetic city with `tasks` generated tasks.
pub fn demo_city(size: usize, tasks: usize, seed: u64) -> (City, Vec<Task>) {
    let city = generate_city(&CitySpec::grid(size, size, seed).with_poi_density(DEMO_POI_DENSITY))
        .expect("demo spec is valid");
    let suite = build_suite(&city.graph, &default_mappings(), tasks, &TaskParams::default(), seed);
    (city, suite)
}
