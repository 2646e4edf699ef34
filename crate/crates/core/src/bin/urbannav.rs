//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 some episodes failed.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urbannav::bench::{build_suite, default_mappings, read_mappings, validate_task, TaskFile, TaskParams};
use urbannav::graph::load_graph;
use urbannav::metrics::GroupBy;
use urbannav::policy::PolicyConfig;
use urbannav::runner::{self, RunSpec};
use urbannav::service::{self, ServiceConfig};
use urbannav::strategy::StrategyStack;
use urbannav::synth::{generate_city, CitySpec};

#[derive(Parser)]
#[command(name = "urbannav", version, about = "Urban navigation environment and agent evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city graph and its observation table.
    Synth(SynthArgs),
    /// Generate and validate a task suite for a graph.
    Build(BuildArgs),
    /// Run a policy over a task suite.
    Run(RunArgs),
    /// Write grouped metric tables for a finished run.
    Report(ReportArgs),
    /// Write plot-ready CSVs for a finished run.
    PlotData(DirArgs),
    /// Recompute metrics from a trajectory log.
    Replay(ReplayArgs),
    /// Serve the interactive session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// City spec JSON; overrides the grid flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    cols: usize,
    #[arg(long, default_value_t = 0.06)]
    poi_density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for graph.json and observations.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Need mappings JSON; the bundled defaults when omitted.
    #[arg(long)]
    mappings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    city: String,
    #[arg(long, default_value_t = 5)]
    min_hops: u32,
    #[arg(long, default_value_t = 25)]
    max_hops: u32,
    #[arg(long, default_value_t = 100.0)]
    min_radius_m: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Run spec JSON; any flag below overrides the matching field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    observations: Option<PathBuf>,
    /// `oracle`, `forward`, `random`, `noisy_oracle:P` or a JSON object.
    #[arg(long)]
    policy: Option<String>,
    /// Mechanisms joined by `+` or `,`, e.g. `B3+R3`.
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupBy::Category)]
    by: GroupBy,
}

#[derive(Args)]
struct DirArgs {
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    log: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory for session snapshots and finished session logs.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    cors_origin: Option<String>,
}

enum Failure {
    Usage(String),
    Input(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::PlotData(a) => plot_data(a),
        Command::Replay(a) => replay(a),
        Command::Serve(a) => serve(a),
    };
    match res {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> CmdResult {
    let spec = match &a.spec {
        Some(p) => serde_json::from_slice(&std::fs::read(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?)?,
        None => CitySpec::grid(a.rows, a.cols, a.seed).with_poi_density(a.poi_density),
    };
    let city = generate_city(&spec)?;
    write(&a.out.join("graph.json"), &city.graph.to_file().to_json())?;
    write(&a.out.join("observations.json"), &city.observations.to_json())?;
    println!(
        "{} nodes, {} edges, {} POIs -> {}",
        city.graph.node_count(),
        city.graph.edge_count(),
        city.graph.pois().len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn build(a: BuildArgs) -> CmdResult {
    let g = load_graph(&a.graph)?;
    let mappings = match &a.mappings {
        Some(p) => read_mappings(p)?,
        None => default_mappings(),
    };
    if a.min_hops > a.max_hops {
        return Err(Failure::Usage("min-hops exceeds max-hops".into()));
    }
    let params = TaskParams {
        hop_bounds: (a.min_hops, a.max_hops),
        min_radius_m: a.min_radius_m,
        city: a.city,
    };
    let tasks = build_suite(&g, &mappings, a.count, &params, a.seed);
    let invalid: Vec<_> = tasks.iter().map(|t| validate_task(&g, t)).filter(|r| !r.passed()).collect();
    for r in &invalid {
        for c in r.checks.iter().filter(|c| !c.passed) {
            eprintln!("{}: {} failed: {}", r.task, c.name, c.detail);
        }
    }
    write(&a.out, &TaskFile { tasks: tasks.clone() }.to_json())?;
    println!("{} tasks ({} requested), {} invalid -> {}", tasks.len(), a.count, invalid.len(), a.out.display());
    if invalid.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn parse_policy(s: &str) -> Result<PolicyConfig, Failure> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| Failure::Usage(format!("policy: {e}")));
    }
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, v)| (k, Some(v)));
    Ok(match (kind, arg) {
        ("oracle", None) => PolicyConfig::Oracle,
        ("forward", None) => PolicyConfig::Forward,
        ("random", seed) => PolicyConfig::Random {
            seed: seed.map(str::parse).transpose().map_err(|e| Failure::Usage(format!("random seed: {e}")))?.unwrap_or(0),
        },
        ("noisy_oracle", Some(p)) => PolicyConfig::NoisyOracle {
            p: p.parse().map_err(|e| Failure::Usage(format!("noise rate: {e}")))?,
            seed: 0,
        },
        _ => return Err(Failure::Usage(format!("unknown policy `{s}`"))),
    })
}

fn run_spec(a: RunArgs) -> Result<RunSpec, Failure> {
    let mut spec = match &a.config {
        Some(p) => RunSpec::read(p)?,
        None => {
            let missing = |f: &str| Failure::Usage(format!("--{f} is required without --config"));
            RunSpec {
                graph: a.graph.clone().ok_or_else(|| missing("graph"))?,
                tasks: a.tasks.clone().ok_or_else(|| missing("tasks"))?,
                observations: None,
                policy: parse_policy(a.policy.as_deref().ok_or_else(|| missing("policy"))?)?,
                strategies: StrategyStack::none(),
                rounds: None,
                parallelism: 1,
                output_dir: a.output_dir.clone().ok_or_else(|| missing("output-dir"))?,
                seed: 0,
                max_steps: urbannav::episode::DEFAULT_MAX_STEPS,
            }
        }
    };
    if let Some(v) = a.graph {
        spec.graph = v;
    }
    if let Some(v) = a.tasks {
        spec.tasks = v;
    }
    if let Some(v) = a.observations {
        spec.observations = Some(v);
    }
    if let Some(v) = a.policy {
        spec.policy = parse_policy(&v)?;
    }
    if let Some(v) = a.strategies {
        spec.strategies = v.parse().map_err(|e| Failure::Usage(format!("strategies: {e}")))?;
    }
    if a.rounds.is_some() {
        spec.rounds = a.rounds;
    }
    if let Some(v) = a.parallelism {
        spec.parallelism = v;
    }
    if let Some(v) = a.output_dir {
        spec.output_dir = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.max_steps {
        spec.max_steps = v;
    }
    Ok(spec)
}

fn run(a: RunArgs) -> CmdResult {
    let spec = run_spec(a)?;
    let art = runner::run_suite(&spec)?;
    let m = &art.manifest;
    println!("run {} -> {}", m.run_id, art.dir.display());
    for row in art.metrics.rows(GroupBy::Overall) {
        println!("{}", serde_json::to_string(row)?);
    }
    if m.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &m.failures {
            eprintln!("{}: {}", f.task, f.error);
        }
        Ok(ExitCode::from(3))
    }
}

fn report(a: ReportArgs) -> CmdResult {
    for p in runner::report(&a.dir, a.by)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn plot_data(a: DirArgs) -> CmdResult {
    for p in runner::emit_plot_data(&a.dir)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(a: ReplayArgs) -> CmdResult {
    let g = load_graph(&a.graph)?;
    let tasks = TaskFile::read(&a.tasks)?.tasks;
    let trajs = runner::read_log(&a.log)?;
    let id = trajs.first().map(|t| t.task.clone()).ok_or_else(|| Failure::Input("log has no episodes".into()))?;
    let task = tasks
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Failure::Input(format!("task `{id}` is not in {}", a.tasks.display())))?;
    let ms = runner::replay(&g, task, &a.log)?;
    print!("{}", runner::episodes_csv(&ms));
    Ok(ExitCode::SUCCESS)
}

fn serve(a: ServeArgs) -> CmdResult {
    let cfg = ServiceConfig {
        data_dir: a.data_dir,
        cors_origin: a.cors_origin,
        ..ServiceConfig::default()
    };
    let app = service::load_state(&a.graph, &a.tasks, a.observations.as_deref(), cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(ExitCode::SUCCESS)
}
