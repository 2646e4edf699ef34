use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read graph file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("graph schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate poi id `{0}`")]
    DuplicatePoi(String),
    #[error("duplicate edge `{from}` -> `{to}`")]
    DuplicateEdge { from: String, to: String },
    #[error("node `{node}` has invalid headings: {reason}")]
    InvalidHeadings { node: String, reason: String },
    #[error("edge `{from}` -> `{to}` references missing node `{missing}`")]
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },
    #[error("edge `{from}` -> `{to}` azimuth {azimuth} matches no heading of `{from}` within {tolerance} deg")]
    HeadingMismatch {
        from: String,
        to: String,
        azimuth: f64,
        tolerance: f64,
    },
    #[error("edge `{from}` -> `{to}` has length {length} m but geodesic distance is {geodesic} m")]
    EdgeLength {
        from: String,
        to: String,
        length: f64,
        geodesic: f64,
    },
    #[error("edge `{from}` -> `{to}` has no reverse edge")]
    MissingReverseEdge { from: String, to: String },
    #[error("poi `{0}` has an empty category")]
    EmptyCategory(String),
    #[error("visibility link `{node}` -> `{poi}` references a missing {what}")]
    DanglingVisibility {
        node: String,
        poi: String,
        what: &'static str,
    },
    #[error("visibility link `{node}` -> `{poi}` spans {distance} m (limit {limit} m)")]
    VisibilityTooFar {
        node: String,
        poi: String,
        distance: f64,
        limit: f64,
    },
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid city spec: {0}")]
    InvalidSpec(String),
    #[error("heading {heading} is not navigable at node `{node}`")]
    HeadingNotNavigable { node: String, heading: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("policy misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("task `{task}` is not runnable: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("invalid strategy stack: {0}")]
    Strategy(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error("trajectory log line {line}: {message}")]
    LogParse { line: usize, message: String },
    #[error("trajectory log structural error at step {step}: {message}")]
    Structural { step: usize, message: String },
}

impl RunError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        RunError::Json {
            path: path.into(),
            source,
        }
    }
}
