mod common;

use std::net::SocketAddr;
use std::sync::Arc;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use urbannav::bench::Task;
use urbannav::episode::{run_episode, Env, EpisodeConfig, Termination};
use urbannav::fixtures::{demo_city, grid_graph, grid_id, task_between};
use urbannav::graph::NavGraph;
use urbannav::metrics::{evaluate, EpisodeMetrics};
use urbannav::policy::OraclePolicy;
use urbannav::service::{spawn_server, AppState, RunningServer, ServiceConfig, SessionReport};
use urbannav::strategy::{MemoryStore, StrategyStack};

fn start(graph: NavGraph, tasks: Vec<Task>, cfg: ServiceConfig) -> RunningServer {
    let app = AppState::new(graph, tasks, None, cfg).unwrap();
    spawn_server(app, SocketAddr::from(([127, 0, 0, 1], 0))).unwrap()
}

struct Api {
    base: String,
    http: Client,
}

impl Api {
    fn new(s: &RunningServer) -> Self {
        Self {
            base: s.base_url(),
            http: Client::new(),
        }
    }
    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }
    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        (r.status(), r.json().unwrap_or(Value::Null))
    }
    fn create(&self, task: &str) -> String {
        let (st, v) = self.post("/sessions", json!({ "task_id": task }));
        assert_eq!(st, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }
}

fn engine_oracle(g: &NavGraph, task: &Task) -> (urbannav::episode::Trajectory, EpisodeMetrics) {
    let env = Env::new(g);
    let t = run_episode(&env, task, &OraclePolicy, &StrategyStack::none(), &mut MemoryStore::new(&task.id), &EpisodeConfig::default()).unwrap();
    let m = evaluate(g, &t, task).unwrap();
    (t, m)
}

#[test]
fn scripted_client_reproduces_engine_oracle() {
    let (city, tasks) = demo_city(12, 8, 21);
    let g = city.graph;
    let server = start(g.clone(), tasks.clone(), ServiceConfig::default());
    let api = Api::new(&server);
    for task in &tasks {
        let (traj, want) = engine_oracle(&g, task);
        let id = api.create(&task.id);
        for step in &traj.steps {
            let (_, state) = api.get(&format!("/sessions/{id}/state"));
            assert_eq!(state["perspectives"].as_array().unwrap().len(), g.out_degree(g.idx(&step.node).unwrap()));
            let (st, _) = match &step.choice {
                _ if step.stop.is_stop() => api.post(&format!("/sessions/{id}/stop"), Value::Null),
                Some(c) => api.post(&format!("/sessions/{id}/action"), json!({ "action": c.action })),
                None => unreachable!("a step without stop has a choice"),
            };
            assert_eq!(st, StatusCode::OK);
        }
        let (st, report) = api.get(&format!("/sessions/{id}/report"));
        assert_eq!(st, StatusCode::OK);
        let report: SessionReport = serde_json::from_value(report).unwrap();
        assert_eq!(report.metrics, want, "task {}", task.id);
        assert_eq!(report.trajectory.positions(), traj.positions());
    }
}

#[test]
fn step_cap_ends_the_session() {
    // a long corridor walked forward never reaches its far end in 35 moves
    let g = grid_graph(1, 60);
    let task = task_between(&g, "far", &grid_id(1, 60, 0, 0), &grid_id(1, 60, 0, 59));
    let server = start(g.clone(), vec![task.clone()], ServiceConfig::default());
    let api = Api::new(&server);
    let id = api.create("far");
    for i in 0..35 {
        let (_, s) = api.get(&format!("/sessions/{id}/state"));
        let fwd = s["perspectives"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["direction"] == "FORWARD")
            .unwrap_or_else(|| panic!("no forward view at move {i}: {s}"))["action"]
            .clone();
        let (st, v) = api.post(&format!("/sessions/{id}/action"), json!({ "action": fwd }));
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["steps_taken"], i + 1);
    }
    let (_, s) = api.get(&format!("/sessions/{id}/state"));
    assert_eq!(s["status"], "capped");
    assert_eq!(s["steps_remaining"], 0);
    let (st, _) = api.post(&format!("/sessions/{id}/action"), json!({ "action": 0 }));
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, r) = api.get(&format!("/sessions/{id}/report"));
    assert_eq!(st, StatusCode::OK);
    let r: SessionReport = serde_json::from_value(r).unwrap();
    assert_eq!(r.trajectory.termination, Termination::StepCap);
    assert_eq!(r.metrics.steps, 35);
    assert!(!r.metrics.tce);
}

#[test]
fn error_statuses() {
    let g = grid_graph(3, 3);
    let task = task_between(&g, "t", &grid_id(3, 3, 0, 0), &grid_id(3, 3, 2, 2));
    let server = start(g, vec![task], ServiceConfig::default());
    let api = Api::new(&server);
    assert_eq!(api.get("/sessions/nope/state").0, StatusCode::NOT_FOUND);
    assert_eq!(api.post("/sessions/nope/action", json!({"action": 0})).0, StatusCode::NOT_FOUND);
    assert_eq!(api.post("/sessions", json!({"task_id": "missing"})).0, StatusCode::NOT_FOUND);
    assert_eq!(api.post("/sessions", json!({"task": 1})).0, StatusCode::BAD_REQUEST);
    let id = api.create("t");
    assert_eq!(api.post(&format!("/sessions/{id}/action"), json!({"action": 9})).0, StatusCode::BAD_REQUEST);
    assert_eq!(api.post(&format!("/sessions/{id}/action"), json!({"action": -1})).0, StatusCode::BAD_REQUEST);
    assert_eq!(api.post(&format!("/sessions/{id}/action"), json!({"oops": 1})).0, StatusCode::BAD_REQUEST);
    assert_eq!(api.get(&format!("/sessions/{id}/report")).0, StatusCode::CONFLICT);
    let (st, v) = api.post(&format!("/sessions/{id}/action"), json!({"action": "stop"}));
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "stopped");
    assert!(v.get("perspectives").is_none());
    assert_eq!(api.post(&format!("/sessions/{id}/stop"), Value::Null).0, StatusCode::CONFLICT);
    let (st, r) = api.get(&format!("/sessions/{id}/report"));
    assert_eq!(st, StatusCode::OK);
    assert_eq!(r["metrics"]["tce"], false);
}

#[test]
fn state_hides_privileged_fields() {
    let (city, tasks) = demo_city(10, 3, 2);
    let g = city.graph;
    let server = start(g.clone(), tasks.clone(), ServiceConfig::default());
    let api = Api::new(&server);
    let (_, list) = api.get("/tasks");
    assert_eq!(list.as_array().unwrap().len(), 3);
    assert_eq!(list[0]["id"], tasks[0].id);
    for t in &tasks {
        let id = api.create(&t.id);
        let (_, s) = api.get(&format!("/sessions/{id}/state"));
        let text = s.to_string();
        for forbidden in ["goal", "gt_path", "distance", "satisfying", &t.goal, &t.start] {
            assert!(!text.contains(forbidden), "`{forbidden}` leaked: {text}");
        }
        for (node, _) in g.nodes() {
            assert!(!text.contains(&format!("\"{}\"", g.id(node))));
        }
        assert_eq!(s["viewpoint"].as_str().unwrap().len(), 16);
    }
}

#[test]
fn cors_header_is_sent() {
    let g = grid_graph(2, 2);
    let task = task_between(&g, "t", &grid_id(2, 2, 0, 0), &grid_id(2, 2, 1, 1));
    let server = start(
        g,
        vec![task],
        ServiceConfig {
            cors_origin: Some("http://localhost:5173".into()),
            ..ServiceConfig::default()
        },
    );
    let r = Client::new()
        .get(format!("{}/tasks", server.base_url()))
        .header("Origin", "http://localhost:5173")
        .send()
        .unwrap();
    assert_eq!(r.headers()["access-control-allow-origin"], "http://localhost:5173");
}

#[test]
fn sessions_survive_restart_and_expire() {
    let tmp = tempfile::tempdir().unwrap();
    let g = grid_graph(3, 3);
    let task = task_between(&g, "t", &grid_id(3, 3, 0, 0), &grid_id(3, 3, 2, 2));
    let cfg = ServiceConfig {
        data_dir: Some(tmp.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let server = start(g.clone(), vec![task.clone()], cfg.clone());
    let api = Api::new(&server);
    let id = api.create("t");
    api.post(&format!("/sessions/{id}/action"), json!({"action": 0}));
    let (_, before) = api.get(&format!("/sessions/{id}/state"));
    server.shutdown().unwrap();

    let app: Arc<AppState> = AppState::new(g.clone(), vec![task.clone()], None, cfg).unwrap();
    assert_eq!(app.session_count(), 1);
    let server = spawn_server(app.clone(), SocketAddr::from(([127, 0, 0, 1], 0))).unwrap();
    let api = Api::new(&server);
    let (st, after) = api.get(&format!("/sessions/{id}/state"));
    assert_eq!(st, StatusCode::OK);
    assert_eq!(before, after);
    assert_eq!(after["steps_taken"], 1);

    let far_future = u64::MAX / 2;
    assert_eq!(app.expire(far_future), 1);
    assert_eq!(api.get(&format!("/sessions/{id}/state")).0, StatusCode::NOT_FOUND);
}

#[test]
fn finished_sessions_write_a_log() {
    let tmp = tempfile::tempdir().unwrap();
    let g = grid_graph(3, 3);
    let task = task_between(&g, "t", &grid_id(3, 3, 0, 0), &grid_id(3, 3, 2, 2));
    let cfg = ServiceConfig {
        data_dir: Some(tmp.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let server = start(g.clone(), vec![task.clone()], cfg);
    let api = Api::new(&server);
    let id = api.create("t");
    api.post(&format!("/sessions/{id}/stop"), Value::Null);
    let log = tmp.path().join("logs").join(format!("{id}.jsonl"));
    let ms = urbannav::runner::replay(&g, &task, &log).unwrap();
    let (_, r) = api.get(&format!("/sessions/{id}/report"));
    let r: SessionReport = serde_json::from_value(r).unwrap();
    assert_eq!(ms, vec![r.metrics]);
}
