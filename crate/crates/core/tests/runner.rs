mod common;

use std::fs;
use std::path::Path;

use common::write_demo;
use urbannav::bench::TaskFile;
use urbannav::error::RunError;
use urbannav::graph::load_graph;
use urbannav::metrics::GroupBy;
use urbannav::policy::PolicyConfig;
use urbannav::runner::{emit_plot_data, episodes_csv, log_name, read_metrics, replay, report, run_suite, RunSpec};

fn spec(files: &common::DemoFiles, out: &Path, policy: PolicyConfig, strategies: &str, parallelism: usize) -> RunSpec {
    RunSpec {
        graph: files.graph.clone(),
        tasks: files.tasks.clone(),
        observations: Some(files.observations.clone()),
        policy,
        strategies: strategies.parse().unwrap(),
        rounds: None,
        parallelism,
        output_dir: out.to_path_buf(),
        seed: 11,
        max_steps: 35,
    }
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn parallel_and_serial_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 12, 12, 4);
    let noisy = PolicyConfig::NoisyOracle { p: 0.3, seed: 5 };
    let a = run_suite(&spec(&files, &tmp.path().join("a"), noisy.clone(), "B3+R3", 1)).unwrap();
    let b = run_suite(&spec(&files, &tmp.path().join("b"), noisy, "B3+R3", 4)).unwrap();
    for f in ["metrics.csv", "episodes.csv"] {
        assert_eq!(read(a.dir.join(f)), read(b.dir.join(f)), "{f}");
    }
    assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
    assert_eq!(a.metrics, b.metrics);
    assert!(a.dir.join("memory").is_dir());
}

#[test]
fn replay_reproduces_episode_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 12, 10, 8);
    let art = run_suite(&spec(&files, &tmp.path().join("run"), PolicyConfig::NoisyOracle { p: 0.4, seed: 1 }, "C1+R1", 2)).unwrap();
    assert_eq!(art.manifest.rounds, 3);
    let g = load_graph(&files.graph).unwrap();
    let tasks = TaskFile::read(&files.tasks).unwrap().tasks;
    let mut finals = Vec::new();
    for t in &tasks {
        let ms = replay(&g, t, art.dir.join("logs").join(format!("{}.jsonl", log_name(&t.id)))).unwrap();
        assert_eq!(ms.len(), 3);
        finals.push(ms.last().unwrap().clone());
    }
    assert_eq!(episodes_csv(&finals), read(art.dir.join("episodes.csv")));
}

#[test]
fn report_and_plot_files() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 10, 8, 2);
    let art = run_suite(&spec(&files, &tmp.path().join("run"), PolicyConfig::Oracle, "none", 1)).unwrap();
    assert!(!art.dir.join("memory").exists());
    let paths = report(&art.dir, GroupBy::City).unwrap();
    assert_eq!(paths.len(), 2);
    let csv = read(art.dir.join("report_city.csv"));
    assert!(csv.lines().nth(1).unwrap().starts_with("synthetic,8,100.0,"), "{csv}");
    assert!(csv.lines().last().unwrap().starts_with("Overall,8,100.0,"));
    emit_plot_data(&art.dir).unwrap();
    assert_eq!(read(art.dir.join("plot_steps_ndtw.csv")).lines().count(), 9);
    assert_eq!(read_metrics(&art.dir).unwrap(), art.metrics);
}

#[test]
fn config_hash_ignores_output_and_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 8, 3, 1);
    let a = spec(&files, &tmp.path().join("a"), PolicyConfig::Forward, "B1", 1);
    let mut b = spec(&files, &tmp.path().join("b"), PolicyConfig::Forward, "B1", 8);
    assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
    b.seed += 1;
    assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
}

#[test]
fn spec_file_paths_resolve_relative_to_file() {
    let tmp = tempfile::tempdir().unwrap();
    write_demo(&tmp.path().join("data"), 8, 3, 1);
    let path = tmp.path().join("run.json");
    fs::write(
        &path,
        r#"{"graph": "data/graph.json", "tasks": "data/tasks.json", "policy": {"kind": "oracle"}, "output_dir": "out", "strategies": ["B3", {"kind": "R3", "n": 4}]}"#,
    )
    .unwrap();
    let s = RunSpec::read(&path).unwrap();
    assert_eq!(s.output_dir, tmp.path().join("out"));
    assert_eq!(s.strategies.to_string(), "B3+R3");
    s.validate().unwrap();
}

#[test]
fn invalid_specs_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 8, 3, 1);
    let mut s = spec(&files, &tmp.path().join("o"), PolicyConfig::NoisyOracle { p: 1.5, seed: 0 }, "none", 1);
    assert!(matches!(run_suite(&s), Err(RunError::InvalidSpec(_))));
    s.policy = PolicyConfig::Oracle;
    s.parallelism = 0;
    assert!(matches!(run_suite(&s), Err(RunError::InvalidSpec(_))));
    s.parallelism = 1;
    s.graph = tmp.path().join("missing.json");
    assert!(run_suite(&s).is_err());
}

#[test]
fn duplicate_task_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 8, 2, 1);
    let mut tf = TaskFile::read(&files.tasks).unwrap();
    tf.tasks[1].id = tf.tasks[0].id.clone();
    fs::write(&files.tasks, tf.to_json()).unwrap();
    let s = spec(&files, &tmp.path().join("o"), PolicyConfig::Oracle, "none", 1);
    assert!(matches!(run_suite(&s), Err(RunError::InvalidSpec(_))));
}

#[test]
fn corrupt_log_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let files = write_demo(&tmp.path().join("data"), 10, 2, 3);
    let art = run_suite(&spec(&files, &tmp.path().join("run"), PolicyConfig::Oracle, "none", 1)).unwrap();
    let g = load_graph(&files.graph).unwrap();
    let task = &TaskFile::read(&files.tasks).unwrap().tasks[0];
    let log = art.dir.join("logs").join(format!("{}.jsonl", log_name(&task.id)));
    let mut lines: Vec<String> = read(&log).lines().map(String::from).collect();
    lines[2] = lines[2].replace("\"node\"", "\"nod\"");
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    match replay(&g, task, &log) {
        Err(RunError::LogParse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}
