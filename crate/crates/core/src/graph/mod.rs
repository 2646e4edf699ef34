//! Georeferenced navigation graph: panorama nodes, azimuth-annotated
//! directed edges, points of interest and node-to-POI visibility links.
//!
//! A [`NavGraph`] is immutable once built and can be shared freely between
//! threads. Every other file format in the crate refers to nodes and POIs by
//! the string ids defined here.

mod index;
mod routing;

use std::collections::{HashMap, HashSet};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

pub use index::SpatialIndex;
pub use routing::{bfs_from, bfs_to, Path, TopoDistance, Weight};

use crate::error::GraphError;
use crate::geo::{angular_separation, geodesic_distance, LatLon};

/// Maximum angular slack between an edge azimuth and a navigable heading.
pub const HEADING_TOLERANCE_DEG: f64 = 1.0;
/// Allowed relative deviation of an edge length from the geodesic distance.
pub const EDGE_LENGTH_TOLERANCE: f64 = 0.05;
/// A POI is visible from a node when it lies within this radius.
pub const VISIBILITY_RADIUS_M: f64 = 50.0;

/// Dense index of a node inside one [`NavGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIdx(pub u32);

impl NodeIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavNode {
    pub id: String,
    pub pos: LatLon,
    /// Navigable headings, ascending and pairwise distinct.
    pub headings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavEdge {
    pub from: NodeIdx,
    pub to: NodeIdx,
    pub azimuth: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub descriptors: Vec<String>,
    pub lat: f64,
    pub lon: f64,
}

impl Poi {
    pub fn pos(&self) -> LatLon {
        LatLon {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub headings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    pub azimuth: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityRecord {
    pub node: String,
    pub poi: String,
}

/// On-disk interchange form of a navigation graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub pois: Vec<Poi>,
    #[serde(default)]
    pub visibility: Vec<VisibilityRecord>,
}

impl GraphFile {
    pub fn read(path: impl AsRef<FsPath>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph file serializes")
    }

    /// Recompute visibility links as every (node, poi) pair within `radius_m`.
    /// Links are emitted in node order, then POI order.
    pub fn relink_visibility(&mut self, radius_m: f64) {
        let mut links = Vec::new();
        for n in &self.nodes {
            let npos = LatLon {
                lat: n.lat,
                lon: n.lon,
            };
            for p in &self.pois {
                if geodesic_distance(npos, p.pos()) <= radius_m {
                    links.push(VisibilityRecord {
                        node: n.id.clone(),
                        poi: p.id.clone(),
                    });
                }
            }
        }
        self.visibility = links;
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NavGraph {
    nodes: Vec<NavNode>,
    node_ids: HashMap<String, NodeIdx>,
    edges: Vec<NavEdge>,
    /// Outgoing edge indices per node, ascending by azimuth.
    out: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    pois: Vec<Poi>,
    poi_ids: HashMap<String, usize>,
    /// Visible POI indices per node, ascending by POI id.
    visible: Vec<Vec<usize>>,
    index: SpatialIndex,
}

/// Read and validate a graph file.
pub fn load_graph(path: impl AsRef<FsPath>) -> Result<NavGraph, GraphError> {
    NavGraph::from_file(GraphFile::read(path)?)
}

impl NavGraph {
    /// Build a graph from its file form, validating every invariant.
    pub fn from_file(file: GraphFile) -> Result<Self, GraphError> {
        let mut nodes = Vec::with_capacity(file.nodes.len());
        let mut node_ids = HashMap::with_capacity(file.nodes.len());
        for rec in file.nodes {
            let pos = LatLon::new(rec.lat, rec.lon)?;
            let mut headings = rec.headings;
            for h in &headings {
                if !h.is_finite() || !(0.0..360.0).contains(h) {
                    return Err(GraphError::InvalidHeadings {
                        node: rec.id.clone(),
                        reason: format!("heading {h} outside [0, 360)"),
                    });
                }
            }
            headings.sort_by(f64::total_cmp);
            if headings.windows(2).any(|w| w[0] == w[1]) {
                return Err(GraphError::InvalidHeadings {
                    node: rec.id.clone(),
                    reason: "duplicate heading".into(),
                });
            }
            let idx = NodeIdx(nodes.len() as u32);
            if node_ids.insert(rec.id.clone(), idx).is_some() {
                return Err(GraphError::DuplicateNode(rec.id));
            }
            nodes.push(NavNode {
                id: rec.id,
                pos,
                headings,
            });
        }

        let mut edges = Vec::with_capacity(file.edges.len());
        let mut seen = HashSet::with_capacity(file.edges.len());
        for rec in &file.edges {
            let lookup = |id: &str| {
                node_ids
                    .get(id)
                    .copied()
                    .ok_or_else(|| GraphError::DanglingEdge {
                        from: rec.from.clone(),
                        to: rec.to.clone(),
                        missing: id.to_string(),
                    })
            };
            let from = lookup(&rec.from)?;
            let to = lookup(&rec.to)?;
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge {
                    from: rec.from.clone(),
                    to: rec.to.clone(),
                });
            }
            let src = &nodes[from.index()];
            if !rec.azimuth.is_finite()
                || !src
                    .headings
                    .iter()
                    .any(|h| angular_separation(*h, rec.azimuth) <= HEADING_TOLERANCE_DEG)
            {
                return Err(GraphError::HeadingMismatch {
                    from: rec.from.clone(),
                    to: rec.to.clone(),
                    azimuth: rec.azimuth,
                    tolerance: HEADING_TOLERANCE_DEG,
                });
            }
            let geodesic = geodesic_distance(src.pos, nodes[to.index()].pos);
            let length_ok = rec.length_m.is_finite()
                && rec.length_m > 0.0
                && (rec.length_m - geodesic).abs() <= EDGE_LENGTH_TOLERANCE * geodesic;
            if !length_ok {
                return Err(GraphError::EdgeLength {
                    from: rec.from.clone(),
                    to: rec.to.clone(),
                    length: rec.length_m,
                    geodesic,
                });
            }
            edges.push(NavEdge {
                from,
                to,
                azimuth: rec.azimuth,
                length_m: rec.length_m,
            });
        }
        for e in &edges {
            if !seen.contains(&(e.to, e.from)) {
                return Err(GraphError::MissingReverseEdge {
                    from: nodes[e.from.index()].id.clone(),
                    to: nodes[e.to.index()].id.clone(),
                });
            }
        }

        let mut out = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            out[e.from.index()].push(i);
            incoming[e.to.index()].push(i);
        }
        for list in &mut out {
            list.sort_by(|&a, &b| {
                edges[a]
                    .azimuth
                    .total_cmp(&edges[b].azimuth)
                    .then_with(|| nodes[edges[a].to.index()].id.cmp(&nodes[edges[b].to.index()].id))
            });
        }

        let mut pois = Vec::with_capacity(file.pois.len());
        let mut poi_ids = HashMap::with_capacity(file.pois.len());
        for p in file.pois {
            LatLon::new(p.lat, p.lon)?;
            if p.category.trim().is_empty() {
                return Err(GraphError::EmptyCategory(p.id));
            }
            if poi_ids.insert(p.id.clone(), pois.len()).is_some() {
                return Err(GraphError::DuplicatePoi(p.id));
            }
            pois.push(p);
        }

        let mut visible = vec![Vec::new(); nodes.len()];
        for link in &file.visibility {
            let n = node_ids
                .get(&link.node)
                .ok_or_else(|| GraphError::DanglingVisibility {
                    node: link.node.clone(),
                    poi: link.poi.clone(),
                    what: "node",
                })?;
            let p = *poi_ids
                .get(&link.poi)
                .ok_or_else(|| GraphError::DanglingVisibility {
                    node: link.node.clone(),
                    poi: link.poi.clone(),
                    what: "poi",
                })?;
            let distance = geodesic_distance(nodes[n.index()].pos, pois[p].pos());
            if distance > VISIBILITY_RADIUS_M + 1e-6 {
                return Err(GraphError::VisibilityTooFar {
                    node: link.node.clone(),
                    poi: link.poi.clone(),
                    distance,
                    limit: VISIBILITY_RADIUS_M,
                });
            }
            let list = &mut visible[n.index()];
            if !list.contains(&p) {
                list.push(p);
            }
        }
        for list in &mut visible {
            list.sort_by(|&a, &b| pois[a].id.cmp(&pois[b].id));
        }

        let index = SpatialIndex::build(nodes.iter().map(|n| n.pos));
        Ok(Self {
            nodes,
            node_ids,
            edges,
            out,
            incoming,
            pois,
            poi_ids,
            visible,
            index,
        })
    }

    /// Serialize back to the file schema. Node, edge and POI order is preserved.
    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    lat: n.pos.lat,
                    lon: n.pos.lon,
                    headings: n.headings.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    from: self.nodes[e.from.index()].id.clone(),
                    to: self.nodes[e.to.index()].id.clone(),
                    azimuth: e.azimuth,
                    length_m: e.length_m,
                })
                .collect(),
            pois: self.pois.clone(),
            visibility: self
                .nodes
                .iter()
                .enumerate()
                .flat_map(|(i, n)| {
                    self.visible[i].iter().map(move |&p| VisibilityRecord {
                        node: n.id.clone(),
                        poi: self.pois[p].id.clone(),
                    })
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = (NodeIdx, &NavNode)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeIdx(i as u32), n))
    }

    pub fn node(&self, idx: NodeIdx) -> &NavNode {
        &self.nodes[idx.index()]
    }

    pub fn id(&self, idx: NodeIdx) -> &str {
        &self.nodes[idx.index()].id
    }

    pub fn idx(&self, id: &str) -> Option<NodeIdx> {
        self.node_ids.get(id).copied()
    }

    /// Like [`idx`](Self::idx) but reports unknown ids as errors.
    pub fn require(&self, id: &str) -> Result<NodeIdx, GraphError> {
        self.idx(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn edges(&self) -> &[NavEdge] {
        &self.edges
    }

    /// Outgoing edges of `v` with their destination nodes, ascending by azimuth.
    pub fn neighbors(&self, v: NodeIdx) -> impl Iterator<Item = (&NavEdge, &NavNode)> + '_ {
        self.out[v.index()].iter().map(move |&e| {
            let edge = &self.edges[e];
            (edge, &self.nodes[edge.to.index()])
        })
    }

    /// String-keyed form of [`neighbors`](Self::neighbors).
    pub fn neighbors_of(&self, id: &str) -> Result<Vec<(&NavEdge, &NavNode)>, GraphError> {
        let v = self.require(id)?;
        Ok(self.neighbors(v).collect())
    }

    pub fn out_degree(&self, v: NodeIdx) -> usize {
        self.out[v.index()].len()
    }

    pub(crate) fn incoming(&self, v: NodeIdx) -> impl Iterator<Item = &NavEdge> + '_ {
        self.incoming[v.index()].iter().map(move |&e| &self.edges[e])
    }

    /// The directed edge `from -> to`, if present.
    pub fn edge_between(&self, from: NodeIdx, to: NodeIdx) -> Option<&NavEdge> {
        self.out[from.index()]
            .iter()
            .map(|&e| &self.edges[e])
            .find(|e| e.to == to)
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn poi(&self, id: &str) -> Option<&Poi> {
        self.poi_ids.get(id).map(|&i| &self.pois[i])
    }

    /// POIs linked as visible from `v`, ordered by POI id.
    pub fn visible_pois(&self, v: NodeIdx) -> impl Iterator<Item = &Poi> + '_ {
        self.visible[v.index()].iter().map(move |&p| &self.pois[p])
    }

    /// Every node within `radius_m` meters (inclusive) of `center`,
    /// ascending by node index.
    pub fn nodes_within_radius(&self, center: LatLon, radius_m: f64) -> Vec<NodeIdx> {
        self.index
            .within(center, radius_m, |i| self.nodes[i].pos)
            .into_iter()
            .map(|i| NodeIdx(i as u32))
            .collect()
    }
}
