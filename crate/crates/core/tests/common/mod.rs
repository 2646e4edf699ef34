#![allow(dead_code)]

pub mod oracles;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;

use urbannav::bench::Task;
use urbannav::episode::{perspectives, DecisionView, Env, Perspective, Phase, PromptContext};
use urbannav::graph::NavGraph;
use urbannav::synth::ObservationText;

/// Owned pieces a [`DecisionView`] borrows from.
pub struct ViewParts {
    pub graph: NavGraph,
    pub task: Task,
    pub node: String,
    pub heading: f64,
    pub perspectives: Vec<Perspective>,
    pub observations: Vec<ObservationText>,
    pub context: PromptContext,
}

impl ViewParts {
    pub fn new(graph: NavGraph, task: Task, node: &str, heading: f64) -> Self {
        let v = graph.idx(node).expect("node exists");
        let ps = perspectives(&graph, v, heading);
        let env = Env::new(&graph);
        let observations = ps.iter().map(|p| env.observe(v, p.heading)).collect();
        Self {
            graph,
            task,
            node: node.to_string(),
            heading,
            perspectives: ps,
            observations,
            context: PromptContext::default(),
        }
    }

    pub fn view(&self, phase: Phase) -> DecisionView<'_> {
        DecisionView {
            graph: &self.graph,
            task: &self.task,
            node: self.graph.idx(&self.node).unwrap(),
            heading: self.heading,
            step: 4,
            phase,
            perspectives: &self.perspectives,
            observations: &self.observations,
            context: &self.context,
            seed: 9,
        }
    }
}

/// One-shot HTTP server answering every request with `status` and `body`.
/// Request bodies are forwarded on the returned channel.
pub fn stub_server(status: u16, body: &'static str, content_type: &'static str) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0u8; len];
            let _ = reader.read_exact(&mut buf);
            let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: {content_type}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}/v1/chat/completions"), rx)
}

pub struct DemoFiles {
    pub graph: std::path::PathBuf,
    pub tasks: std::path::PathBuf,
    pub observations: std::path::PathBuf,
}

/// Write a seeded demo city and task suite into `dir`.
pub fn write_demo(dir: &std::path::Path, size: usize, tasks: usize, seed: u64) -> DemoFiles {
    let (city, suite) = urbannav::fixtures::demo_city(size, tasks, seed);
    let files = DemoFiles {
        graph: dir.join("graph.json"),
        tasks: dir.join("tasks.json"),
        observations: dir.join("observations.json"),
    };
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(&files.graph, city.graph.to_file().to_json()).unwrap();
    std::fs::write(&files.observations, city.observations.to_json()).unwrap();
    std::fs::write(&files.tasks, urbannav::bench::TaskFile { tasks: suite }.to_json()).unwrap();
    files
}
